#include "identikit.h"

#include <cstdlib>
#include <new>
#include <string>

#include "identikit/commands.hpp"
#include "identikit/config.hpp"
#include "identikit/diagnostics.hpp"
#include "identikit/error.hpp"
#include "identikit/io.hpp"

struct ik_config {
  identikit::RunConfig config;
  std::string resolved;
};

struct ik_operator {
  identikit::LinOp op;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_result;

ik_status status_of(identikit::ErrorKind k) {
  using identikit::ErrorKind;
  switch (k) {
    case ErrorKind::InvalidArgument: return IK_ERR_ARGUMENT;
    case ErrorKind::Config: return IK_ERR_CONFIG;
    case ErrorKind::Identification: return IK_ERR_IDENTIFICATION;
    case ErrorKind::Numerical: return IK_ERR_NUMERICAL;
    case ErrorKind::Io: return IK_ERR_IO;
  }
  return IK_ERR_INTERNAL;
}

template <class F>
ik_status guarded(F&& f) {
  last_error.clear();
  try {
    f();
    return IK_OK;
  } catch (const identikit::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return IK_ERR_NUMERICAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return IK_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) identikit::fail(identikit::ErrorKind::InvalidArgument, std::string(what) + " is null");
}

ik_config* wrap(identikit::RunConfig c) {
  auto* h = new ik_config{std::move(c), {}};
  h->resolved = h->config.resolved.dump(2);
  return h;
}

std::size_t env_threads() {
  const char* v = std::getenv("IDENTIKIT_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const unsigned long n = std::strtoul(v, &end, 10);
  if (*end != '\0' || n == 0)
    identikit::fail(identikit::ErrorKind::Config, "IDENTIKIT_THREADS must be a positive integer");
  return n;
}

}  // namespace

extern "C" {

const char* ik_version(void) { return identikit::kVersion; }
const char* ik_last_error(void) { return last_error.c_str(); }
const char* ik_last_result(void) { return last_result.c_str(); }

int ik_exit_code(ik_status s) {
  switch (s) {
    case IK_OK: return 0;
    case IK_ERR_IDENTIFICATION: return 3;
    case IK_ERR_NUMERICAL:
    case IK_ERR_INTERNAL: return 4;
    default: return 2;
  }
}

ik_status ik_config_load(const char* path, ik_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = wrap(identikit::load_config(path));
  });
}

ik_status ik_config_parse(const char* text, ik_config** out) {
  return guarded([&] {
    need(text, "json_text");
    need(out, "out");
    *out = wrap(identikit::parse_config(text));
  });
}

void ik_config_free(ik_config* c) { delete c; }

const char* ik_config_resolved(const ik_config* c) { return c ? c->resolved.c_str() : ""; }

void ik_run_options_init(ik_run_options* o) {
  if (o) *o = ik_run_options{nullptr, 0, 0, 0, 0, nullptr};
}

ik_status ik_run(const char* command, const ik_config* config, const ik_run_options* options) {
  last_result.clear();
  return guarded([&] {
    need(command, "command");
    need(config, "config");
    identikit::CommandOptions o;
    if (options) {
      if (options->out_dir) o.out_dir = options->out_dir;
      if (options->has_seed) o.seed = options->seed;
      o.threads = options->threads;
      if (options->simulate) o.simulate = options->simulate;
      if (options->data_path) o.data = options->data_path;
    }
    if (o.threads == 0) o.threads = env_threads();
    auto r = identikit::run_command(command, config->config, o);
    identikit::Json s = r.summary;
    s["files"] = r.files;
    last_result = s.dump();
  });
}

ik_status ik_operator_build(const ik_config* config, int fine, ik_operator** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = new ik_operator{identikit::build_operator(config->config, fine != 0)};
  });
}

ik_status ik_operator_load(const char* path, ik_operator** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new ik_operator{identikit::read_operator(std::string(path))};
  });
}

ik_status ik_operator_save(const ik_operator* op, const char* path) {
  return guarded([&] {
    need(op, "op");
    need(path, "path");
    identikit::write_operator(op->op, std::string(path));
  });
}

void ik_operator_free(ik_operator* op) { delete op; }

ik_status ik_operator_shape(const ik_operator* op, size_t* rows, size_t* cols) {
  return guarded([&] {
    need(op, "op");
    if (rows) *rows = op->op.rows();
    if (cols) *cols = op->op.cols();
  });
}

ik_status ik_operator_apply(const ik_operator* op, const double* b, size_t b_len, double* out, size_t out_len) {
  return guarded([&] {
    need(op, "op");
    need(b, "b");
    need(out, "out");
    identikit::require(b_len == op->op.cols() && out_len == op->op.rows(), "length mismatch");
    const identikit::Vec r = op->op.apply(
        identikit::Vec(Eigen::Map<const identikit::Vec>(b, static_cast<Eigen::Index>(b_len))));
    Eigen::Map<identikit::Vec>(out, static_cast<Eigen::Index>(out_len)) = r;
  });
}

ik_status ik_operator_apply_adjoint(const ik_operator* op, const double* g, size_t g_len, double* out,
                                    size_t out_len) {
  return guarded([&] {
    need(op, "op");
    need(g, "g");
    need(out, "out");
    identikit::require(g_len == op->op.rows() && out_len == op->op.cols(), "length mismatch");
    const identikit::LinOp adj = identikit::adjoint(op->op);
    const identikit::Vec r = adj.apply(
        identikit::Vec(Eigen::Map<const identikit::Vec>(g, static_cast<Eigen::Index>(g_len))));
    Eigen::Map<identikit::Vec>(out, static_cast<Eigen::Index>(out_len)) = r;
  });
}

ik_status ik_operator_weights(const ik_operator* op, int codomain, double* out, size_t out_len) {
  return guarded([&] {
    need(op, "op");
    need(out, "out");
    const auto& w = (codomain ? op->op.codomain() : op->op.domain())->weights();
    identikit::require(out_len == static_cast<size_t>(w.size()), "length mismatch");
    Eigen::Map<identikit::Vec>(out, w.size()) = w;
  });
}

ik_status ik_operator_singular_values(const ik_operator* op, double* out, size_t capacity, size_t* count) {
  return guarded([&] {
    need(op, "op");
    const auto sys = identikit::singular_system(op->op);
    if (count) *count = sys.size();
    for (size_t i = 0; i < capacity && i < sys.size(); ++i) {
      need(out, "out");
      out[i] = sys.values[static_cast<Eigen::Index>(i)];
    }
  });
}

}  // extern "C"
