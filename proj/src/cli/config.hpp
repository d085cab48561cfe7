#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stackelberg/best_response.hpp"
#include "stackelberg/compact_sets.hpp"
#include "stackelberg/ensemble.hpp"
#include "stackelberg/game.hpp"
#include "stackelberg/neural_operator.hpp"
#include "stackelberg/training.hpp"

namespace stackelberg::cli {

struct GameBlock {
  std::string name = "scalar_quadratic";
  nlohmann::json params = nlohmann::json::object();
};

struct CompactSetBlock {
  std::string type = "holder";  // holder | lipschitz | exp_ellipsoid | finite | latent
  double alpha = 0.5;
  double bound = 1.0;
  int knots = 9;
  double lip = 1.0;
  double offset = 0.0;
  double C = 1.0;
  double r = 0.5;
  std::size_t count = 12;
  std::vector<double> values;  // finite: constant controls
  int d_lat = 2;
  int width = 8;
  std::uint64_t seed = 0;  // latent: net initialization
};

struct Tolerances {
  double sigma_multiple = 3.0;   // basis-check: |G - I| <= k SE
  double max_std_error = 0.02;   // basis-check: cap on the largest SE
  double certificate = 1e-4;     // best-response slack tolerance
  double epsilon = 5e-2;         // certify: eps and objective gap threshold
  std::optional<double> sup_error_ratio;  // train: fail if sup_error > ratio * target sup norm
};

struct BestResponseBlock {
  int pairs = 20;
  double eps_min = 0.01;  // perturbation sizes are log-spaced over [eps_min, eps_max]
  double eps_max = 0.1;
};

struct CertifyBlock {
  int probes = 64;
  std::string checkpoint;  // default: <outputs>/checkpoint.tensors
  int leader_steps = 0;    // extra leader descent steps with the operator frozen
};

struct CounterexampleBlock {
  std::vector<double> grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  int G = 10000;
};

struct SimBlock {
  double u0 = 0.0;
  double u1 = 0.0;
  std::size_t export_paths = 16;  // scenarios written to state.csv
};

struct RunConfig {
  HorizonConfig horizon;
  std::size_t paths = 1000;
  std::uint64_t seed = 0;
  GameBlock game;
  int basis_count = 16;
  int d_enc = 8;
  int d1 = 16;
  OperatorConfig op;
  TrainConfig train;
  int train_count = 64;
  int held_out_count = 16;
  bool resume = false;
  ResponseSolveConfig solver;
  CompactSetBlock compact_set;
  Tolerances tolerances;
  BestResponseBlock best_response;
  CertifyBlock certify;
  CounterexampleBlock counterexample;
  SimBlock sim;
  std::string output_dir = "run";
  nlohmann::json raw;
};

// Throws ConfigError for malformed documents, unknown keys or invalid values.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

GameSpec make_game(const GameBlock& block);
CompactSetSpec make_compact_set(const CompactSetBlock& block, const BrownianEnsemble& ens);
CoefficientBox make_box(const CompactSetBlock& block);

}  // namespace stackelberg::cli
