#include "boostdet/boostdet.h"

#include <cstring>
#include <string>

#include "json.hpp"

#include "boostdet/config.hpp"
#include "boostdet/errors.hpp"
#include "boostdet/runner.hpp"

using nlohmann::json;

struct bdt_session {
  boostdet::RunConfig config;
  std::string last_error;
};

namespace {

char* dup_string(const std::string& text) {
  char* out = new char[text.size() + 1];
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

template <typename Fn>
bdt_status guarded(bdt_session* session, Fn&& fn) {
  if (!session) return BDT_ERR_INVALID_ARGUMENT;
  try {
    session->last_error.clear();
    return fn();
  } catch (const boostdet::ConfigError& e) {
    session->last_error = e.what();
    return BDT_ERR_CONFIG;
  } catch (const boostdet::InputError& e) {
    session->last_error = e.what();
    return BDT_ERR_INPUT;
  } catch (const boostdet::StateError& e) {
    session->last_error = e.what();
    return BDT_ERR_STATE;
  } catch (const boostdet::TrainingError& e) {
    session->last_error = e.what();
    return BDT_ERR_TRAINING;
  } catch (const boostdet::IoError& e) {
    session->last_error = e.what();
    return BDT_ERR_IO;
  } catch (const std::exception& e) {
    session->last_error = e.what();
    return BDT_ERR_INTERNAL;
  } catch (...) {
    session->last_error = "unknown error";
    return BDT_ERR_INTERNAL;
  }
}

json ap_json(const boostdet::ApResult& m) {
  json per_class = json::object();
  for (const auto& [cls, ap] : m.per_class_ap) per_class[std::to_string(cls)] = ap;
  return json{{"ap", m.ap}, {"ap50", m.ap50}, {"ap75", m.ap75}, {"per_class_ap", per_class}};
}

}  // namespace

extern "C" {

const char* bdt_version(void) { return "boostdet 1.0.0"; }

const char* bdt_status_name(bdt_status status) {
  switch (status) {
    case BDT_OK: return "ok";
    case BDT_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case BDT_ERR_CONFIG: return "config_error";
    case BDT_ERR_INPUT: return "input_error";
    case BDT_ERR_STATE: return "state_error";
    case BDT_ERR_TRAINING: return "training_error";
    case BDT_ERR_IO: return "io_error";
    case BDT_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

bdt_status bdt_session_create(bdt_session** out) {
  if (!out) return BDT_ERR_INVALID_ARGUMENT;
  *out = new bdt_session{};
  return BDT_OK;
}

bdt_status bdt_session_create_from_json(const char* config_json, bdt_session** out) {
  if (!out || !config_json) return BDT_ERR_INVALID_ARGUMENT;
  bdt_session* session = new bdt_session{};
  const bdt_status status = guarded(session, [&] {
    session->config = boostdet::parse_run_config(config_json);
    return BDT_OK;
  });
  if (status != BDT_OK) {
    // hand the session back anyway so the caller can read the error
    *out = session;
    return status;
  }
  *out = session;
  return BDT_OK;
}

bdt_status bdt_session_create_from_file(const char* config_path, bdt_session** out) {
  if (!out || !config_path) return BDT_ERR_INVALID_ARGUMENT;
  bdt_session* session = new bdt_session{};
  const bdt_status status = guarded(session, [&] {
    session->config = boostdet::load_run_config(config_path);
    return BDT_OK;
  });
  *out = session;
  return status;
}

void bdt_session_destroy(bdt_session* session) { delete session; }

const char* bdt_session_last_error(const bdt_session* session) {
  if (!session) return "null session";
  return session->last_error.c_str();
}

bdt_status bdt_session_set(bdt_session* session, const char* key, const char* value) {
  if (!key || !value) return BDT_ERR_INVALID_ARGUMENT;
  return guarded(session, [&] {
    session->config = boostdet::apply_config_override(session->config, key, value);
    return BDT_OK;
  });
}

bdt_status bdt_session_config_json(bdt_session* session, char** out_json) {
  if (!out_json) return BDT_ERR_INVALID_ARGUMENT;
  return guarded(session, [&] {
    *out_json = dup_string(boostdet::run_config_to_json(session->config));
    return BDT_OK;
  });
}

bdt_status bdt_gen_data(bdt_session* session, char** out_summary_json) {
  return guarded(session, [&] {
    const boostdet::GenDataOutcome outcome = boostdet::run_gen_data(session->config);
    if (out_summary_json) {
      *out_summary_json = dup_string(json{{"path", outcome.path},
                                          {"n_scenes", outcome.n_scenes},
                                          {"n_train", outcome.n_train},
                                          {"n_val", outcome.n_val},
                                          {"n_objects", outcome.n_objects}}
                                         .dump(2));
    }
    return BDT_OK;
  });
}

bdt_status bdt_train(bdt_session* session, char** out_summary_json) {
  return guarded(session, [&] {
    const boostdet::TrainOutcome outcome = boostdet::run_train(session->config);
    if (out_summary_json) {
      json epochs = json::array();
      for (const boostdet::EpochStats& e : outcome.epochs) {
        epochs.push_back(json{{"epoch", e.epoch}, {"loss_total", e.total}});
      }
      *out_summary_json = dup_string(json{{"checkpoint", outcome.checkpoint_path},
                                          {"log", outcome.log_path},
                                          {"diverged", outcome.diverged},
                                          {"last_epoch", outcome.last_epoch},
                                          {"epochs", epochs}}
                                         .dump(2));
    }
    if (outcome.diverged) {
      session->last_error = "training diverged; last-good checkpoint written to " +
                            outcome.checkpoint_path;
      return BDT_ERR_TRAINING;
    }
    return BDT_OK;
  });
}

bdt_status bdt_eval(bdt_session* session, char** out_metrics_json) {
  return guarded(session, [&] {
    const boostdet::EvalOutcome outcome = boostdet::run_eval(session->config);
    if (out_metrics_json) {
      json doc{{"metrics", ap_json(outcome.metrics)},
               {"metrics_path", outcome.metrics_path},
               {"detections_path", outcome.detections_path},
               {"gt_path", outcome.gt_path},
               {"n_scenes", outcome.n_scenes}};
      if (!outcome.extra_variants.empty()) {
        json variants = json::object();
        for (const boostdet::VariantMetrics& v : outcome.extra_variants) {
          variants[v.variant] = ap_json(v.metrics);
        }
        doc["variants"] = variants;
      }
      *out_metrics_json = dup_string(doc.dump(2));
    }
    return BDT_OK;
  });
}

bdt_status bdt_ablate(bdt_session* session, char** out_summary_json) {
  return guarded(session, [&] {
    const boostdet::AblateOutcome outcome = boostdet::run_ablate(session->config);
    if (out_summary_json) {
      json rows = json::array();
      for (const boostdet::AblateRow& row : outcome.rows) {
        rows.push_back(json{{"variant", row.variant},
                            {"parameter", row.parameter},
                            {"normalize", row.normalize},
                            {"seed", row.seed},
                            {"ap", row.metrics.ap},
                            {"ap50", row.metrics.ap50},
                            {"ap75", row.metrics.ap75}});
      }
      *out_summary_json = dup_string(json{{"csv", outcome.csv_path},
                                          {"summary_csv", outcome.summary_path},
                                          {"rows", rows}}
                                         .dump(2));
    }
    return BDT_OK;
  });
}

bdt_status bdt_grad_check(bdt_session* session, char** out_report_json) {
  return guarded(session, [&] {
    const boostdet::GradCheckReport report =
        boostdet::run_grad_check(session->config.seed, 200);
    if (out_report_json) {
      *out_report_json = dup_string(boostdet::grad_check_report_json(report));
    }
    if (!report.all_pass) {
      session->last_error = "gradient checks failed";
      return BDT_ERR_TRAINING;
    }
    return BDT_OK;
  });
}

bdt_status bdt_plot(bdt_session* session, char** out_summary_json) {
  return guarded(session, [&] {
    const boostdet::PlotOutcome outcome = boostdet::run_plot(session->config);
    if (out_summary_json) {
      *out_summary_json = dup_string(json{{"files", outcome.files}}.dump(2));
    }
    return BDT_OK;
  });
}

void bdt_string_free(char* text) { delete[] text; }

}  // extern "C"
