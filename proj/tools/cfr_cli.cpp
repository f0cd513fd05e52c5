// Command-line entry point: dataset generation, search, benchmarks,
// training, gradient checks and the HTTP service.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

// Keep Eigen-including headers above httplib.
#include "cfr/embedding_store.hpp"
#include "cfr/encoder.hpp"
#include "cfr/engine.hpp"
#include "cfr/protocol.hpp"
#include "cfr/service.hpp"
#include "cfr/trainer.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

namespace {

using namespace cfr;

struct DataOptions {
  std::string data_dir;
  std::string adapters;
  SynthConfig synth;

  void add(CLI::App* app, bool with_adapters = true) {
    app->add_option("--data", data_dir, "Dataset bundle directory (default: generate the synthetic benchmark)")
        ->envname("CFR_DATA");
    if (with_adapters) {
      app->add_option("--adapters", adapters, "Adapter checkpoint (default: identity adapters)")
          ->envname("CFR_ADAPTERS");
    }
    add_synth(app);
  }

  void add_synth(CLI::App* app) {
    app->add_option("--seed", synth.seed, "Root seed")->capture_default_str();
    app->add_option("--n-items", synth.n_items, "Synthetic catalog size")->capture_default_str();
    app->add_option("--n-attributes", synth.n_attributes, "Synthetic attribute vocabulary")->capture_default_str();
    app->add_option("--attrs-per-item", synth.attrs_per_item)->capture_default_str();
    app->add_option("--text-attrs", synth.text_attrs, "Attributes named in item text")->capture_default_str();
    app->add_option("--dim", synth.dim)->capture_default_str();
    app->add_option("--noise-sigma", synth.noise_sigma)->capture_default_str();
    app->add_option("--nuisance-rank", synth.nuisance_rank, "Rank of retrieval-space noise (0 = isotropic)")
        ->capture_default_str();
    app->add_option("--n-test", synth.n_test_queries, "Synthetic test queries")->capture_default_str();
  }

  std::shared_ptr<const Dataset> load() const {
    if (!data_dir.empty()) return std::make_shared<const Dataset>(ingest(data_dir));
    return std::make_shared<const Dataset>(generate_synthetic(synth));
  }

  EncoderStack stack(const Dataset& ds) const {
    if (adapters.empty()) return EncoderStack::identity(ds.retrieval_images.dim());
    auto s = read_checkpoint(adapters);
    if (s.dim() != ds.retrieval_images.dim()) throw InvalidArgument("adapter checkpoint dim does not match dataset");
    return s;
  }
};

void add_protocol_options(CLI::App* app, ProtocolParams& p) {
  app->add_option("--lambda-p", p.ranker.lambda_p, "Weight of liked-item similarity")->capture_default_str();
  app->add_option("--lambda-n", p.ranker.lambda_n, "Weight of disliked-item similarity")->capture_default_str();
  app->add_option("--n-like", p.oracle.n_like)->capture_default_str();
  app->add_option("--n-dislike", p.oracle.n_dislike)->capture_default_str();
  app->add_option("--k", p.selector.k, "Candidate pool size shown to the oracle")->capture_default_str();
  app->add_option("--lambda-div", p.selector.lambda_diversity, "Diversity penalty for candidate selection")
      ->capture_default_str();
  app->add_option("--threads", p.threads)->capture_default_str();
  app->add_flag("--exclude-target-feedback", p.exclude_target_feedback,
                "Keep the target out of the candidate pool");
}

OracleMode parse_mode(const std::string& s) { return oracle_mode_from_string(s); }

std::span<const ItemId> pick_split(const Dataset& ds, const std::string& split) {
  if (split == "test") return ds.splits.test;
  if (split == "train") return ds.splits.train;
  throw InvalidArgument("split must be 'test' or 'train'");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path);
  out << text;
}

void print_list(const Dataset& ds, std::span<const double> scores, std::size_t k) {
  const auto ids = top_k(scores, k);
  for (std::size_t pos = 0; pos < ids.size(); ++pos) {
    std::printf("%4zu  id=%-6u score=%+.5f  %s\n", pos + 1, ids[pos], scores[ids[pos]], ds.items[ids[pos]].text.c_str());
  }
}

httplib::Server* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Click-feedback retrieval engine"};
  app.require_subcommand(1);

  // gen-synthetic
  DataOptions gen_opts;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a seeded synthetic dataset bundle");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen_opts.add_synth(gen);

  // ingest-check
  std::string check_dir;
  auto* check = app.add_subcommand("ingest-check", "Load and validate a dataset bundle");
  check->add_option("--data", check_dir, "Dataset bundle directory")->required();

  // search
  DataOptions search_opts;
  std::string query;
  std::size_t search_k = 10;
  std::vector<ItemId> likes, dislikes;
  RankerParams search_ranker;
  auto* search = app.add_subcommand("search", "Run one query, optionally with like/dislike feedback");
  search_opts.add(search);
  search->add_option("--query", query, "Query text")->required();
  search->add_option("--k", search_k, "Results to print")->capture_default_str();
  search->add_option("--likes", likes, "Liked item ids")->delimiter(',');
  search->add_option("--dislikes", dislikes, "Disliked item ids")->delimiter(',');
  search->add_option("--lambda-p", search_ranker.lambda_p)->capture_default_str();
  search->add_option("--lambda-n", search_ranker.lambda_n)->capture_default_str();

  // benchmark
  DataOptions bench_opts;
  ProtocolParams bench_params;
  std::string bench_out, bench_split = "test", bench_mode = "preference_embedding";
  auto* bench = app.add_subcommand("benchmark", "Run the retrieval / feedback / re-rank protocol");
  bench_opts.add(bench);
  add_protocol_options(bench, bench_params);
  bench->add_option("--oracle", bench_mode, "preference_embedding or attribute_iou")->capture_default_str();
  bench->add_option("--split", bench_split, "test or train")->capture_default_str();
  bench->add_option("--out", bench_out, "Write the report JSON here");

  // ablate
  DataOptions ablate_opts;
  ProtocolParams ablate_params;
  std::string grid_name = "lambda", ablate_out, ablate_split = "test";
  auto* ablate = app.add_subcommand("ablate", "Run a parameter grid and print a comparison table");
  ablate_opts.add(ablate);
  add_protocol_options(ablate, ablate_params);
  ablate->add_option("--grid", grid_name, "lambda, nfeedback or diversity")->capture_default_str();
  ablate->add_option("--split", ablate_split, "test or train")->capture_default_str();
  ablate->add_option("--out", ablate_out, "Write all reports as a JSON array here");

  // train
  DataOptions train_opts;
  TrainerConfig train_cfg;
  std::string loss_name = "ranking", train_out, curve_out;
  bool sep_enc = false;
  auto* trn = app.add_subcommand("train", "Train adapters with feedback-guided losses");
  train_opts.add(trn);
  trn->add_option("--loss", loss_name, "ranking or contrastive")->capture_default_str();
  trn->add_flag("--sep-enc", sep_enc, "Separate image adapter for image-to-image similarity");
  trn->add_option("--epochs", train_cfg.epochs)->capture_default_str();
  trn->add_option("--lr", train_cfg.learning_rate)->capture_default_str();
  trn->add_option("--batch-size", train_cfg.batch_size)->capture_default_str();
  trn->add_option("--margin", train_cfg.margin)->capture_default_str();
  trn->add_option("--temperature", train_cfg.temperature)->capture_default_str();
  trn->add_option("--alignment-weight", train_cfg.alignment_weight)->capture_default_str();
  trn->add_option("--out", train_out, "Adapter checkpoint to write")->required();
  trn->add_option("--curve", curve_out, "Loss curve JSON to write");

  // gradcheck
  std::size_t trials = 100;
  double tolerance = 1e-4;
  std::string grad_loss = "both";
  std::uint64_t grad_seed = 7;
  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  grad->add_option("--trials", trials)->capture_default_str();
  grad->add_option("--tolerance", tolerance)->capture_default_str();
  grad->add_option("--loss", grad_loss, "ranking, contrastive or both")->capture_default_str();
  grad->add_option("--seed", grad_seed)->capture_default_str();

  // serve
  DataOptions serve_opts;
  ServiceConfig serve_cfg;
  std::string bind = "127.0.0.1", static_dir;
  int port = 8080;
  long ttl_s = 1800;
  auto* serve = app.add_subcommand("serve", "Start the HTTP session service");
  serve_opts.add(serve);
  serve->add_option("--bind", bind)->envname("CFR_BIND")->capture_default_str();
  serve->add_option("--port", port)->envname("CFR_PORT")->capture_default_str();
  serve->add_option("--lambda-p", serve_cfg.ranker.lambda_p)->envname("CFR_LAMBDA_P")->capture_default_str();
  serve->add_option("--lambda-n", serve_cfg.ranker.lambda_n)->envname("CFR_LAMBDA_N")->capture_default_str();
  serve->add_option("--k", serve_cfg.default_k, "Default result count")->envname("CFR_K")->capture_default_str();
  serve->add_option("--ttl", ttl_s, "Session idle TTL in seconds")->capture_default_str();
  serve->add_option("--static-dir", static_dir, "Serve a built web client from this directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto ds = generate_synthetic(gen_opts.synth);
      write_bundle(gen_out, ds);
      std::printf("wrote %zu items (dim %zu, %zu train / %zu test queries) to %s\nchecksum %016llx\n", ds.size(),
                  ds.retrieval_images.dim(), ds.splits.train.size(), ds.splits.test.size(), gen_out.c_str(),
                  static_cast<unsigned long long>(checksum(ds)));
    } else if (*check) {
      const auto ds = ingest(check_dir);
      std::printf("ok: %zu items, dim %zu, vocab %zu tokens, %zu train / %zu test queries%s\nchecksum %016llx\n",
                  ds.size(), ds.retrieval_images.dim(), ds.vocab.tokens.size(), ds.splits.train.size(),
                  ds.splits.test.size(), ds.query_vectors ? ", precomputed query vectors" : "",
                  static_cast<unsigned long long>(checksum(ds)));
    } else if (*search) {
      const auto ds = search_opts.load();
      const Engine engine(ds, search_opts.stack(*ds));
      const auto q = engine.encode_text(query);
      const auto scores = engine.scores(q);
      const std::size_t k = std::min(search_k, ds->size());
      std::printf("initial retrieval for \"%s\":\n", query.c_str());
      print_list(*ds, scores, k);
      if (!likes.empty() || !dislikes.empty()) {
        const Feedback fb{likes, dislikes};
        const auto updated = engine.scores(q, fb, search_ranker);
        std::printf("\nafter feedback (%zu liked, %zu disliked):\n", likes.size(), dislikes.size());
        print_list(*ds, updated, k);
      }
    } else if (*bench) {
      const auto ds = bench_opts.load();
      const Engine engine(ds, bench_opts.stack(*ds));
      bench_params.oracle.mode = parse_mode(bench_mode);
      const auto report = run_protocol(engine, pick_split(*ds, bench_split), bench_params, bench_opts.synth.seed);
      std::cout << format_summary(report);
      std::printf("queries %zu, wall time %.2fs, report checksum %016llx\n", report.per_query.size(),
                  report.wall_time_s, static_cast<unsigned long long>(report.checksum()));
      if (!bench_out.empty()) write_text(bench_out, report.to_json().dump(2) + "\n");
    } else if (*ablate) {
      const auto ds = ablate_opts.load();
      const Engine engine(ds, ablate_opts.stack(*ds));
      const auto kind = grid_kind_from_string(grid_name);
      const auto grid = make_grid(kind, ablate_params);
      const auto reports = run_ablation(engine, pick_split(*ds, ablate_split), grid, ablate_opts.synth.seed);
      std::cout << format_table(kind, reports);
      if (!ablate_out.empty()) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& r : reports) arr.push_back(r.to_json());
        write_text(ablate_out, arr.dump(2) + "\n");
      }
    } else if (*trn) {
      const auto ds = train_opts.load();
      train_cfg.loss_kind = loss_kind_from_string(loss_name);
      train_cfg.seed = train_opts.synth.seed;
      auto initial = train_opts.stack(*ds);
      if (sep_enc && !initial.sep_enc()) initial.image_unimodal_sep = initial.image_crossmodal;
      const auto result = train(ds, train_cfg, initial, [](const EpochLoss& e) {
        std::printf("epoch %3zu  mean loss %.6f\n", e.epoch, e.mean_loss);
        std::fflush(stdout);
      });
      write_checkpoint(train_out, result.stack);
      if (!curve_out.empty()) write_text(curve_out, curve_to_json(result.curve).dump(2) + "\n");
      std::printf("wrote %s\n", train_out.c_str());
    } else if (*grad) {
      bool ok = true;
      for (auto kind : {LossKind::ranking, LossKind::contrastive}) {
        if (grad_loss != "both" && loss_kind_from_string(grad_loss) != kind) continue;
        const auto r = gradient_check(kind, trials, tolerance, grad_seed);
        std::printf("%-12s trials %zu (resampled %zu)  max rel err %.3e  %s\n", std::string(to_string(kind)).c_str(),
                    r.trials, r.resampled, r.max_rel_error, r.passed() ? "PASS" : "FAIL");
        ok = ok && r.passed();
      }
      return ok ? 0 : 1;
    } else if (*serve) {
      const auto ds = serve_opts.load();
      auto engine = std::make_shared<const Engine>(ds, serve_opts.stack(*ds));
      serve_cfg.session_ttl = std::chrono::seconds(ttl_s);
      SessionService service(engine, serve_cfg);
      httplib::Server server;
      service.install(server, static_dir);
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
      });
      std::printf("listening on http://%s:%d (%zu items)\n", bind.c_str(), port, ds->size());
      std::fflush(stdout);
      if (!server.listen(bind, port)) {
        std::fprintf(stderr, "error: cannot listen on %s:%d\n", bind.c_str(), port);
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
