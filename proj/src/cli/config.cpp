#include "config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>

#include "stackelberg/error.hpp"

namespace stackelberg::cli {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& block, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config: block '" + block + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("config: unknown key '" + key + "' in block '" + block + "'");
    }
  }
}

template <class T>
void read(const json& j, const std::string& block, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + block + "." + key + "' has the wrong type");
  }
}

const json& block_of(const json& doc, const char* name) {
  static const json empty = json::object();
  return doc.contains(name) ? doc.at(name) : empty;
}

ActivationFamily family_from(const std::string& s) {
  if (s == "superexpressive") return ActivationFamily::SuperExpressive;
  if (s == "standard") return ActivationFamily::Standard;
  throw ConfigError("config: operator.activation must be 'superexpressive' or 'standard'");
}

StandardActivation base_from(const std::string& s) {
  if (s == "tanh") return StandardActivation::Tanh;
  if (s == "relu") return StandardActivation::Relu;
  throw ConfigError("config: operator.base must be 'tanh' or 'relu'");
}

}  // namespace

RunConfig parse_config(const json& doc) {
  check_keys(doc, "<root>",
             {"horizon", "ensemble", "game", "basis", "operator", "training", "solver", "compact_set", "tolerances",
              "best_response", "certify", "counterexample", "sim", "outputs"});
  RunConfig c;
  c.raw = doc;

  const json& h = block_of(doc, "horizon");
  check_keys(h, "horizon", {"T", "M", "d"});
  read(h, "horizon", "T", c.horizon.T);
  read(h, "horizon", "M", c.horizon.M);
  read(h, "horizon", "d", c.horizon.d);
  c.horizon.validate();

  const json& e = block_of(doc, "ensemble");
  check_keys(e, "ensemble", {"P", "seed"});
  read(e, "ensemble", "P", c.paths);
  read(e, "ensemble", "seed", c.seed);
  if (c.paths < 2) throw ConfigError("config: ensemble.P must be at least 2");

  const json& g = block_of(doc, "game");
  check_keys(g, "game", {"name", "params"});
  read(g, "game", "name", c.game.name);
  if (g.contains("params")) c.game.params = g.at("params");

  const json& b = block_of(doc, "basis");
  check_keys(b, "basis", {"count", "d_enc", "d1"});
  read(b, "basis", "count", c.basis_count);
  read(b, "basis", "d_enc", c.d_enc);
  read(b, "basis", "d1", c.d1);
  if (c.basis_count < 1 || c.d_enc < 1 || c.d1 < 1) throw ConfigError("config: basis sizes must be positive");

  const json& o = block_of(doc, "operator");
  check_keys(o, "operator", {"N", "Q", "J", "W", "activation", "base", "seed"});
  c.op.d_enc = c.d_enc;
  read(o, "operator", "N", c.op.N);
  read(o, "operator", "Q", c.op.Q);
  read(o, "operator", "J", c.op.J);
  read(o, "operator", "W", c.op.W);
  read(o, "operator", "seed", c.op.seed);
  std::string fam = "superexpressive", base = "tanh";
  read(o, "operator", "activation", fam);
  read(o, "operator", "base", base);
  c.op.family = family_from(fam);
  c.op.base = base_from(base);
  c.op.validate();

  const json& t = block_of(doc, "training");
  check_keys(t, "training",
             {"mode", "epochs", "batch_size", "learning_rate", "momentum", "seed", "eval_count", "param_radius",
              "leader_learning_rate", "divergence_limit", "train_count", "held_out_count", "resume"});
  std::string mode = "supervised";
  read(t, "training", "mode", mode);
  if (mode == "supervised") {
    c.train.mode = TrainMode::Supervised;
  } else if (mode == "unsupervised") {
    c.train.mode = TrainMode::Unsupervised;
  } else {
    throw ConfigError("config: training.mode must be 'supervised' or 'unsupervised'");
  }
  read(t, "training", "epochs", c.train.epochs);
  read(t, "training", "batch_size", c.train.batch_size);
  read(t, "training", "learning_rate", c.train.learning_rate);
  read(t, "training", "momentum", c.train.momentum);
  read(t, "training", "seed", c.train.seed);
  read(t, "training", "eval_count", c.train.eval_count);
  read(t, "training", "param_radius", c.train.param_radius);
  read(t, "training", "leader_learning_rate", c.train.leader_learning_rate);
  read(t, "training", "divergence_limit", c.train.divergence_limit);
  read(t, "training", "train_count", c.train_count);
  read(t, "training", "held_out_count", c.held_out_count);
  read(t, "training", "resume", c.resume);
  c.train.validate();
  if (c.train_count < 1 || c.held_out_count < 0) throw ConfigError("config: training sample counts are invalid");

  const json& s = block_of(doc, "solver");
  check_keys(s, "solver", {"max_iters", "step_rule", "fixed_step", "grad_tol", "restarts", "seed", "init_scale"});
  c.solver.d1_basis = c.d1;
  read(s, "solver", "max_iters", c.solver.max_iters);
  read(s, "solver", "fixed_step", c.solver.fixed_step);
  read(s, "solver", "grad_tol", c.solver.grad_tol);
  read(s, "solver", "restarts", c.solver.restarts);
  read(s, "solver", "seed", c.solver.seed);
  read(s, "solver", "init_scale", c.solver.init_scale);
  std::string rule = "backtracking";
  read(s, "solver", "step_rule", rule);
  if (rule == "backtracking") {
    c.solver.step_rule = StepRule::Backtracking;
  } else if (rule == "fixed") {
    c.solver.step_rule = StepRule::Fixed;
  } else {
    throw ConfigError("config: solver.step_rule must be 'backtracking' or 'fixed'");
  }
  c.solver.validate();

  const json& k = block_of(doc, "compact_set");
  check_keys(k, "compact_set",
             {"type", "alpha", "bound", "knots", "lip", "offset", "C", "r", "count", "values", "d_lat", "width", "seed"});
  auto& cs = c.compact_set;
  read(k, "compact_set", "type", cs.type);
  read(k, "compact_set", "alpha", cs.alpha);
  read(k, "compact_set", "bound", cs.bound);
  read(k, "compact_set", "knots", cs.knots);
  read(k, "compact_set", "lip", cs.lip);
  read(k, "compact_set", "offset", cs.offset);
  read(k, "compact_set", "C", cs.C);
  read(k, "compact_set", "r", cs.r);
  read(k, "compact_set", "count", cs.count);
  read(k, "compact_set", "values", cs.values);
  read(k, "compact_set", "d_lat", cs.d_lat);
  read(k, "compact_set", "width", cs.width);
  read(k, "compact_set", "seed", cs.seed);
  if (cs.type != "holder" && cs.type != "lipschitz" && cs.type != "exp_ellipsoid" && cs.type != "finite" &&
      cs.type != "latent") {
    throw ConfigError("config: unknown compact_set.type '" + cs.type + "'");
  }

  const json& tol = block_of(doc, "tolerances");
  check_keys(tol, "tolerances", {"sigma_multiple", "max_std_error", "certificate", "epsilon", "sup_error_ratio"});
  read(tol, "tolerances", "sigma_multiple", c.tolerances.sigma_multiple);
  read(tol, "tolerances", "max_std_error", c.tolerances.max_std_error);
  read(tol, "tolerances", "certificate", c.tolerances.certificate);
  read(tol, "tolerances", "epsilon", c.tolerances.epsilon);
  if (tol.contains("sup_error_ratio")) {
    double r = 0.0;
    read(tol, "tolerances", "sup_error_ratio", r);
    c.tolerances.sup_error_ratio = r;
  }

  const json& br = block_of(doc, "best_response");
  check_keys(br, "best_response", {"pairs", "eps_min", "eps_max"});
  read(br, "best_response", "pairs", c.best_response.pairs);
  read(br, "best_response", "eps_min", c.best_response.eps_min);
  read(br, "best_response", "eps_max", c.best_response.eps_max);
  if (c.best_response.pairs < 1 || !(c.best_response.eps_min > 0.0) ||
      !(c.best_response.eps_max >= c.best_response.eps_min)) {
    throw ConfigError("config: best_response needs pairs >= 1 and 0 < eps_min <= eps_max");
  }

  const json& ce = block_of(doc, "certify");
  check_keys(ce, "certify", {"probes", "checkpoint", "leader_steps"});
  read(ce, "certify", "probes", c.certify.probes);
  read(ce, "certify", "checkpoint", c.certify.checkpoint);
  read(ce, "certify", "leader_steps", c.certify.leader_steps);
  if (c.certify.probes < 1) throw ConfigError("config: certify.probes must be positive");

  const json& cx = block_of(doc, "counterexample");
  check_keys(cx, "counterexample", {"grid", "G"});
  read(cx, "counterexample", "grid", c.counterexample.grid);
  read(cx, "counterexample", "G", c.counterexample.G);
  if (c.counterexample.G < 1) throw ConfigError("config: counterexample.G must be positive");
  for (double u : c.counterexample.grid) {
    if (!(u >= 0.0 && u <= 1.0)) throw ConfigError("config: counterexample grid points must lie in [0,1]");
  }

  const json& sm = block_of(doc, "sim");
  check_keys(sm, "sim", {"u0", "u1", "export_paths"});
  read(sm, "sim", "u0", c.sim.u0);
  read(sm, "sim", "u1", c.sim.u1);
  read(sm, "sim", "export_paths", c.sim.export_paths);

  const json& out = block_of(doc, "outputs");
  check_keys(out, "outputs", {"directory"});
  read(out, "outputs", "directory", c.output_dir);

  make_game(c.game);  // validates the game block
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  return parse_config(doc);
}

GameSpec make_game(const GameBlock& block) {
  const json& p = block.params;
  auto num = [&](const char* key, double def) {
    double v = def;
    read(p, "game.params", key, v);
    return v;
  };
  GameSpec spec;
  if (block.name == "scalar_quadratic") {
    check_keys(p, "game.params", {"sigma", "q", "X0", "kappa"});
    spec = catalog_scalar_quadratic(num("sigma", 0.2), num("q", 0.1), num("X0", 1.0));
  } else if (block.name == "tracking") {
    check_keys(p, "game.params", {"a", "b", "w0", "w1", "kappa"});
    spec = catalog_tracking(num("a", 0.0), num("b", 1.0), num("w0", 1.0), num("w1", 1.0));
  } else if (block.name == "gbm") {
    check_keys(p, "game.params", {"mu", "eta", "X0", "kappa"});
    spec = catalog_gbm(num("mu", 0.05), num("eta", 0.2), num("X0", 1.0));
  } else if (block.name == "counterexample") {
    check_keys(p, "game.params", {"kappa"});
    spec = catalog_counterexample();
  } else {
    throw ConfigError("config: unknown game '" + block.name + "'");
  }
  if (p.contains("kappa")) spec.kappa = num("kappa", 0.0);
  spec.validate();
  return spec;
}

CompactSetSpec make_compact_set(const CompactSetBlock& b, const BrownianEnsemble& ens) {
  CompactSetSpec spec;
  if (b.type == "holder") {
    spec = HolderDeterministicSet{b.alpha, b.bound, b.knots};
  } else if (b.type == "lipschitz") {
    spec = LipschitzConditionedSet{b.lip, b.offset};
  } else if (b.type == "exp_ellipsoid") {
    spec = ExpEllipsoidSet{std::nullopt, b.C, b.r, b.count};
  } else if (b.type == "finite") {
    FiniteSet f;
    for (double v : b.values) f.elements.push_back(AdaptedProcess::constant(ens, v));
    spec = std::move(f);
  } else {
    spec = LatentManifoldSet{b.d_lat, Mlp::glorot({b.d_lat, b.width, static_cast<int>(b.count)},
                                                  ActivationFamily::Standard, b.seed)};
  }
  validate(spec);
  return spec;
}

CoefficientBox make_box(const CompactSetBlock& b) {
  if (b.type != "exp_ellipsoid") {
    throw ConfigError("config: unsupervised training and certify need compact_set.type = 'exp_ellipsoid'");
  }
  return CoefficientBox::exp_ellipsoid(b.C, b.r, b.count);
}

}  // namespace stackelberg::cli
