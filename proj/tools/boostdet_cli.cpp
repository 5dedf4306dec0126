// boostdet command-line front end. Talks to the library exclusively through
// the C API in boostdet/boostdet.h; subcommands map 1:1 onto bdt_* calls.
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "boostdet/boostdet.h"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string variant;
  std::uint64_t seed = 0;
  bool has_seed = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration JSON file");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "random seed")->each([&args](const std::string&) {
    args.has_seed = true;
  });
  cmd->add_option("--variant", args.variant,
                  "pipeline variant (full|no-br|no-fusion|prior-only|baseline)");
}

// exits with a machine-parsable one-liner on stderr
int fail(bdt_session* session, bdt_status status) {
  std::fprintf(stderr, "error[%s]: %s\n", bdt_status_name(status),
               session ? bdt_session_last_error(session) : "session creation failed");
  bdt_session_destroy(session);
  return static_cast<int>(status);
}

int apply_set(bdt_session* session, const std::string& key, const std::string& value) {
  const bdt_status status = bdt_session_set(session, key.c_str(), value.c_str());
  if (status != BDT_OK) {
    std::fprintf(stderr, "error[%s]: %s\n", bdt_status_name(status),
                 bdt_session_last_error(session));
  }
  return status;
}

bdt_session* open_session(const CommonArgs& args, bdt_status* status) {
  bdt_session* session = nullptr;
  *status = args.config_path.empty()
                ? bdt_session_create(&session)
                : bdt_session_create_from_file(args.config_path.c_str(), &session);
  if (*status != BDT_OK) return session;
  if (args.has_seed) {
    if ((*status = static_cast<bdt_status>(
             apply_set(session, "seed", std::to_string(args.seed)))) != BDT_OK) {
      return session;
    }
  }
  if (!args.out_dir.empty()) {
    if ((*status = static_cast<bdt_status>(
             apply_set(session, "out_dir", args.out_dir))) != BDT_OK) {
      return session;
    }
  }
  if (!args.variant.empty()) {
    if ((*status = static_cast<bdt_status>(
             apply_set(session, "variant", args.variant))) != BDT_OK) {
      return session;
    }
  }
  *status = BDT_OK;
  return session;
}

void print_and_free(char* text) {
  if (!text) return;
  std::printf("%s\n", text);
  bdt_string_free(text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"boostdet: two-stage detector with IoU-aware priors, probabilistic "
               "score fusion and boosting reweighting on synthetic vague-object scenes"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, ablate_args, grad_args, plot_args;
  std::string dataset_path, checkpoint_path, resume_path, detections_path, gt_path;
  bool eval_all_variants = false;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic scene dataset");
  add_common(gen, gen_args);
  gen->add_option("--data", dataset_path, "dataset output path");

  CLI::App* train = app.add_subcommand("train", "train the detector");
  add_common(train, train_args);
  train->add_option("--data", dataset_path, "dataset path");
  train->add_option("--checkpoint", checkpoint_path, "checkpoint output path");
  train->add_option("--resume", resume_path, "checkpoint to resume from");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint (or detection dumps)");
  add_common(eval, eval_args);
  eval->add_option("--data", dataset_path, "dataset path");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint path");
  eval->add_option("--detections", detections_path, "detection dump (file mode)");
  eval->add_option("--gt", gt_path, "ground-truth dump (file mode)");
  eval->add_flag("--all-variants", eval_all_variants,
                 "also report prior-only / no-fusion metrics");

  CLI::App* ablate = app.add_subcommand("ablate", "run the ablation ladder or a sweep");
  add_common(ablate, ablate_args);
  ablate->add_option("--data", dataset_path, "dataset path");
  std::string ablate_mode;
  ablate->add_option("--mode", ablate_mode, "ladder|eta_sweep|omega_sweep");

  CLI::App* grad = app.add_subcommand("grad-check", "finite-difference gradient suite");
  add_common(grad, grad_args);

  CLI::App* plot = app.add_subcommand("plot", "render SVG figures from run outputs");
  add_common(plot, plot_args);
  std::string plot_ablation, plot_detections, plot_gt;
  plot->add_option("--ablation", plot_ablation, "ablation CSV path");
  plot->add_option("--detections", plot_detections, "detection dump path");
  plot->add_option("--gt", plot_gt, "ground-truth dump path");

  CLI11_PARSE(app, argc, argv);

  CommonArgs* args = nullptr;
  if (gen->parsed()) args = &gen_args;
  if (train->parsed()) args = &train_args;
  if (eval->parsed()) args = &eval_args;
  if (ablate->parsed()) args = &ablate_args;
  if (grad->parsed()) args = &grad_args;
  if (plot->parsed()) args = &plot_args;

  bdt_status status = BDT_OK;
  bdt_session* session = open_session(*args, &status);
  if (status != BDT_OK) return fail(session, status);

  auto set_or_fail = [&](const char* key, const std::string& value) {
    if (value.empty()) return true;
    status = static_cast<bdt_status>(apply_set(session, key, value));
    return status == BDT_OK;
  };

  if (!set_or_fail("paths.dataset", dataset_path) ||
      !set_or_fail("paths.checkpoint", checkpoint_path) ||
      !set_or_fail("paths.resume", resume_path) ||
      !set_or_fail("paths.detections", detections_path) ||
      !set_or_fail("paths.gt", gt_path)) {
    bdt_session_destroy(session);
    return static_cast<int>(status);
  }

  char* output = nullptr;
  if (gen->parsed()) {
    status = bdt_gen_data(session, &output);
  } else if (train->parsed()) {
    status = bdt_train(session, &output);
  } else if (eval->parsed()) {
    if (eval_all_variants &&
        apply_set(session, "eval_all_variants", "true") != BDT_OK) {
      bdt_session_destroy(session);
      return static_cast<int>(BDT_ERR_CONFIG);
    }
    status = bdt_eval(session, &output);
  } else if (ablate->parsed()) {
    if (!ablate_mode.empty() && apply_set(session, "ablate.mode", ablate_mode) != BDT_OK) {
      bdt_session_destroy(session);
      return static_cast<int>(BDT_ERR_CONFIG);
    }
    status = bdt_ablate(session, &output);
  } else if (grad->parsed()) {
    status = bdt_grad_check(session, &output);
  } else if (plot->parsed()) {
    if (!set_or_fail("paths.ablation", plot_ablation) ||
        !set_or_fail("paths.detections", plot_detections) ||
        !set_or_fail("paths.gt", plot_gt)) {
      bdt_session_destroy(session);
      return static_cast<int>(status);
    }
    status = bdt_plot(session, &output);
  }

  print_and_free(output);
  if (status != BDT_OK) return fail(session, status);
  bdt_session_destroy(session);
  return 0;
}
