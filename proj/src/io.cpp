#include "fqeval/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fqeval/errors.hpp"
#include "fqeval/version.hpp"

namespace fqeval::io {

namespace {

using nlohmann::json;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

void dump_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write file: " + path);
  out << j.dump(2) << "\n";
}

void check_schema(const json& j, const std::string& path) {
  if (!j.contains("schema") || !j["schema"].is_number_integer())
    throw ParseError(path + ": missing integer schema field");
  const int schema = j["schema"].get<int>();
  if (schema != kSchemaVersion)
    throw ParseError(path + ": unsupported schema version " + std::to_string(schema) +
                     " (expected " + std::to_string(kSchemaVersion) + ")");
}

std::vector<double> get_array(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key))
    throw ParseError(path + ": missing field '" + key + "'");
  try {
    return j[key].get<std::vector<double>>();
  } catch (const json::exception&) {
    throw ParseError(path + ": field '" + key + "' is not a numeric array");
  }
}

int get_int(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key) || !j[key].is_number_integer())
    throw ParseError(path + ": missing integer field '" + key + "'");
  return j[key].get<int>();
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

TabularMdp read_mdp(const std::string& path) {
  const json j = load_json(path);
  check_schema(j, path);
  try {
    return TabularMdp(get_int(j, "n_states", path), get_int(j, "n_actions", path),
                      get_int(j, "horizon", path), get_array(j, "transition", path),
                      get_array(j, "reward", path), get_array(j, "initial_dist", path));
  } catch (const ConfigError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_mdp(const TabularMdp& mdp, const std::string& path) {
  json j;
  j["schema"] = kSchemaVersion;
  j["n_states"] = mdp.n_states;
  j["n_actions"] = mdp.n_actions;
  j["horizon"] = mdp.horizon;
  // Row-major [s][a][s'] / [s][a].
  j["transition"] = mdp.transition;
  j["reward"] = mdp.reward;
  j["initial_dist"] = mdp.initial_dist;
  dump_json(j, path);
}

Policy read_policy(const std::string& path) {
  const json j = load_json(path);
  check_schema(j, path);
  try {
    return Policy(get_int(j, "n_states", path), get_int(j, "n_actions", path),
                  get_array(j, "probs", path));
  } catch (const ConfigError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_policy(const Policy& policy, const std::string& path) {
  json j;
  j["schema"] = kSchemaVersion;
  j["n_states"] = policy.n_states;
  j["n_actions"] = policy.n_actions;
  j["probs"] = policy.probs;
  dump_json(j, path);
}

FeatureMap read_features(const std::string& path) {
  const json j = load_json(path);
  check_schema(j, path);
  const std::string kind = j.value("kind", "");
  const int n_states = get_int(j, "n_states", path);
  const int n_actions = get_int(j, "n_actions", path);
  const int dim = get_int(j, "dim", path);
  try {
    if (kind == "one_hot") {
      if (dim != n_states * n_actions)
        throw ParseError(path + ": one_hot feature dim must equal n_states*n_actions");
      return FeatureMap::one_hot(n_states, n_actions);
    }
    if (kind == "custom_table" || kind == "random_linear") {
      FeatureMap f =
          FeatureMap::custom(n_states, n_actions, dim, get_array(j, "table", path));
      if (kind == "random_linear") f.kind = FeatureMap::Kind::random_linear;
      return f;
    }
  } catch (const ConfigError& e) {
    throw ParseError(path + ": " + e.what());
  }
  throw ParseError(path + ": unknown feature map kind '" + kind + "'");
}

void write_features(const FeatureMap& fmap, const std::string& path) {
  json j;
  j["schema"] = kSchemaVersion;
  switch (fmap.kind) {
    case FeatureMap::Kind::one_hot:
      j["kind"] = "one_hot";
      break;
    case FeatureMap::Kind::custom_table:
      j["kind"] = "custom_table";
      break;
    case FeatureMap::Kind::random_linear:
      j["kind"] = "random_linear";
      break;
  }
  j["n_states"] = fmap.n_states;
  j["n_actions"] = fmap.n_actions;
  j["dim"] = fmap.dim;
  if (fmap.kind != FeatureMap::Kind::one_hot) j["table"] = fmap.table;
  dump_json(j, path);
}

void write_dataset(const Dataset& data, const std::string& path,
                   const std::string& provenance) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write file: " + path);
  out << "# fqeval-dataset schema=" << kSchemaVersion << " K=" << data.n_episodes()
      << " H=" << data.horizon << " seed=" << data.seed << "\n";
  if (!provenance.empty()) out << "# " << provenance << "\n";
  out << "episode,h,s,a,r,s_next\n";
  for (int k = 0; k < data.n_episodes(); ++k) {
    const Trajectory& ep = data.episodes[k];
    for (int h = 0; h < data.horizon; ++h) {
      out << k << ',' << (h + 1) << ',' << ep.states[h] << ',' << ep.actions[h] << ','
          << format_double(ep.rewards[h]) << ',' << ep.states[h + 1] << "\n";
    }
  }
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# fqeval-dataset", 0) != 0)
    throw ParseError(path + ": missing dataset header line");

  int schema = -1, episodes = -1, horizon = -1;
  std::uint64_t seed = 0;
  try {
    std::istringstream hs(line.substr(2));
    std::string token;
    while (hs >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = token.substr(0, eq);
      const std::string val = token.substr(eq + 1);
      if (key == "schema") schema = std::stoi(val);
      if (key == "K") episodes = std::stoi(val);
      if (key == "H") horizon = std::stoi(val);
      if (key == "seed") seed = std::stoull(val);
    }
  } catch (const std::exception&) {
    throw ParseError(path + ": malformed dataset header: " + line);
  }
  if (schema != kSchemaVersion)
    throw ParseError(path + ": unsupported dataset schema " + std::to_string(schema));
  if (episodes < 1 || horizon < 1)
    throw ParseError(path + ": header must carry positive K and H");

  Dataset data;
  data.horizon = horizon;
  data.seed = seed;
  data.episodes.assign(episodes, Trajectory{});
  for (auto& ep : data.episodes) {
    ep.states.assign(horizon + 1, -1);
    ep.actions.assign(horizon, -1);
    ep.rewards.assign(horizon, 0.0);
  }

  long rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("episode,", 0) == 0) continue;  // column header
    std::istringstream ls(line);
    std::string field;
    long vals_i[4];
    double reward = 0.0;
    int s_next = 0;
    int col = 0;
    try {
      while (std::getline(ls, field, ',')) {
        switch (col) {
          case 0:
          case 1:
          case 2:
          case 3:
            vals_i[col] = std::stol(field);
            break;
          case 4:
            reward = std::stod(field);
            break;
          case 5:
            s_next = static_cast<int>(std::stol(field));
            break;
          default:
            throw ParseError(path + ": too many columns in row");
        }
        ++col;
      }
    } catch (const std::exception&) {
      throw ParseError(path + ": malformed dataset row: " + line);
    }
    if (col != 6) throw ParseError(path + ": expected 6 columns per row");
    const long k = vals_i[0];
    const long h = vals_i[1] - 1;  // file rows are 1-based in h
    if (k < 0 || k >= episodes || h < 0 || h >= horizon)
      throw ParseError(path + ": row indexes outside the declared K/H");
    Trajectory& ep = data.episodes[k];
    ep.states[h] = static_cast<int>(vals_i[2]);
    ep.actions[h] = static_cast<int>(vals_i[3]);
    ep.rewards[h] = reward;
    ep.states[h + 1] = s_next;
    ++rows;
  }
  if (rows != static_cast<long>(episodes) * horizon)
    throw ParseError(path + ": expected " + std::to_string(static_cast<long>(episodes) * horizon) +
                     " transition rows, found " + std::to_string(rows));
  for (const auto& ep : data.episodes)
    for (int h = 0; h < horizon; ++h)
      if (ep.states[h] < 0 || ep.actions[h] < 0)
        throw ParseError(path + ": dataset has missing transitions");
  return data;
}

void write_estimate(const FqeEstimate& est, const std::string& path,
                    const std::string& provenance) {
  json j;
  j["schema"] = kSchemaVersion;
  j["family"] = est.family;
  j["lambda"] = est.lambda;
  j["horizon"] = static_cast<int>(est.thetas.size());
  j["dim"] = est.thetas.empty() ? 0 : static_cast<int>(est.thetas.front().size());
  j["value"] = est.value;
  j["thetas"] = est.thetas;
  json stages = json::array();
  for (const auto& r : est.per_stage) {
    stages.push_back({{"iters", r.iters},
                      {"final_grad_norm", r.final_grad_norm},
                      {"loss", r.loss},
                      {"converged", r.converged},
                      {"touched_box", r.touched_box}});
  }
  j["per_stage"] = stages;
  j["provenance"] = provenance;
  dump_json(j, path);
}

FqeEstimate read_estimate(const std::string& path) {
  const json j = load_json(path);
  check_schema(j, path);
  FqeEstimate est;
  est.family = j.value("family", "");
  est.lambda = j.value("lambda", 0.0);
  est.value = j.value("value", 0.0);
  try {
    est.thetas = j.at("thetas").get<std::vector<std::vector<double>>>();
  } catch (const json::exception&) {
    throw ParseError(path + ": field 'thetas' is not an array of arrays");
  }
  if (j.contains("per_stage")) {
    for (const auto& s : j["per_stage"]) {
      SolverReport r;
      r.iters = s.value("iters", 0);
      r.final_grad_norm = s.value("final_grad_norm", 0.0);
      r.loss = s.value("loss", 0.0);
      r.converged = s.value("converged", true);
      r.touched_box = s.value("touched_box", false);
      est.per_stage.push_back(r);
    }
  }
  return est;
}

}  // namespace fqeval::io
