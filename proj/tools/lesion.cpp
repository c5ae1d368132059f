#include <csignal>
#include <iostream>
#include <optional>

#include <pthread.h>

#include "CLI11.hpp"
#include "lesion/errors.hpp"
#include "lesion/pipeline.hpp"
#include "lesion/review_server.hpp"

namespace fs = std::filesystem;
using namespace lesion;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string work_dir;
  std::string corpus;
  bool paper_preset = false;
  bool quiet = false;
};

pipeline::PipelineConfig resolve(const GlobalOptions& g) {
  pipeline::PipelineConfig c = g.config.empty() ? pipeline::PipelineConfig{} : pipeline::load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!g.work_dir.empty()) c.work_dir = g.work_dir;
  if (!g.corpus.empty()) c.corpus_root = g.corpus;
  if (g.paper_preset) pipeline::apply_paper_preset(c);
  pipeline::validate(c);
  return c;
}

pipeline::StageProgress progress_printer(const GlobalOptions& g) {
  if (g.quiet) return {};
  return [](std::size_t iteration, double loss) {
    if (iteration % 100 == 0) std::cerr << "  iteration " << iteration << " loss " << loss << '\n';
  };
}

void print(const pipeline::StageReport& r) {
  std::cout << pipeline::to_string(r.stage) << ": processed " << r.processed << " of " << r.input_count << ", skipped "
            << r.skipped.size() << " in " << r.wall_seconds << " s\n";
  for (const auto& s : r.skipped) std::cout << "  skipped " << s.image_id << ": " << s.reason << '\n';
  std::cout << "  " << r.details_json << '\n';
}

int serve(const pipeline::PipelineConfig& c, const std::string& host, int port, const std::string& static_dir) {
  // Signals are taken synchronously below, so server threads must not see them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  review::ReviewStore store(c.layout());
  review::ReviewServer server(store, {host, port, static_dir});
  const int bound = server.start();
  const auto p = store.progress();
  std::cout << "review service on http://" << host << ':' << bound << " (" << p.decided << '/' << p.total
            << " decided); Ctrl-C to stop" << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  std::cout << "review service stopped" << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-annotating skin lesion segmentation and classification pipeline"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "JSON pipeline config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for every random choice");
  app.add_option("--work-dir", g.work_dir, "Directory for masks, models, crops and reports");
  app.add_option("--corpus", g.corpus, "Corpus root holding benign/ and malignant/");
  app.add_flag("--paper-preset", g.paper_preset, "256x256 U-Net input");
  app.add_flag("-q,--quiet", g.quiet, "No training progress");

  std::size_t synth_n = 80, synth_size = 64;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic labelled corpus with ground-truth masks");
  synth->add_option("--n", synth_n, "Image count (even)");
  synth->add_option("--size", synth_size, "Image side in pixels");
  synth->add_option("--out", synth_out, "Output corpus root")->required();

  std::map<std::string, pipeline::Stage> stage_commands;
  for (const auto stage : pipeline::kAllStages) {
    const std::string name = pipeline::to_string(stage);
    app.add_subcommand(name, "Run the " + name + " stage");
    stage_commands[name] = stage;
  }
  app.add_subcommand("pipeline", "Run every stage in order");

  std::string host = "127.0.0.1", static_dir;
  int port = 8080;
  auto* review_cmd = app.add_subcommand("review-serve", "Serve the mask review API for a work directory");
  review_cmd->add_option("--host", host, "Bind address");
  review_cmd->add_option("--port", port, "Port (0 picks a free one)");
  review_cmd->add_option("--static", static_dir, "Review UI bundle to serve at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const auto* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    if (name == "synth") {
      const auto s = pipeline::generate_synthetic_corpus(synth_n, synth_size, g.seed.value_or(0), synth_out);
      std::cout << "wrote " << s.benign << " benign and " << s.malignant << " malignant images to " << synth_out
                << "; ground truth in " << s.ground_truth_dir.string() << '\n';
      return 0;
    }
    const auto config = resolve(g);
    if (name == "review-serve") return serve(config, host, port, static_dir);
    if (name == "pipeline") {
      for (const auto stage : pipeline::kAllStages) print(pipeline::run_stage(stage, config, progress_printer(g)));
      std::cout << "metrics: " << config.layout().metrics().string() << '\n';
      return 0;
    }
    print(pipeline::run_stage(stage_commands.at(name), config, progress_printer(g)));
    return 0;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
