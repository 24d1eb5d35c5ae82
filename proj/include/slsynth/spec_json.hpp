#pragma once

#include "slsynth/model.hpp"

#include <json.hpp>

#include <fstream>
#include <string>

namespace sls {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON spec schema (documented in the README):
//   dims {nx, nu, nr}, horizon, dt,
//   dynamics {id, params}, observation {Cr, envelope {id, params}},
//   constraints {rows [{c, b, terminal, at_k}], state_box, input_box,
//                terminal_box, obstacles [{dims, center, radius}]},
//   costs {Qbar, Rbar, Pbar, Q, R, P}, noise {Xi, E}, x0, goal.
// Matrices are nested row-major arrays; {"diag": [...]} and
// {"scaled_identity": [s, n]} are accepted on input.
// ---------------------------------------------------------------------------

inline json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline json vec_to_json(const Vec& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Vec vec_from_json(const json& j) {
  if (!j.is_array()) throw SpecError("expected a JSON array for a vector");
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i].get<double>();
  return v;
}

inline Mat mat_from_json(const json& j) {
  if (j.is_object()) {
    if (j.contains("diag")) {
      const Vec d = vec_from_json(j["diag"]);
      return Mat(d.asDiagonal());
    }
    if (j.contains("scaled_identity")) {
      const auto& si = j["scaled_identity"];
      return si[0].get<double>() * Mat::Identity(si[1].get<int>(), si[1].get<int>());
    }
    throw SpecError("unknown matrix shorthand object");
  }
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw SpecError("expected nested arrays for a matrix");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols) throw SpecError("ragged matrix rows");
    for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

inline json spec_to_json(const ProblemSpec& s) {
  if (s.dynamics.id.empty())
    throw SpecError("cannot serialize a spec with custom (unregistered) dynamics");
  json j;
  j["name"] = s.name;
  j["dims"] = {{"nx", s.nx}, {"nu", s.nu}, {"nr", s.nr}};
  j["horizon"] = s.T;
  j["dt"] = s.dt;
  j["dynamics"] = {{"id", s.dynamics.id}, {"params", s.dynamics.params}};
  j["observation"] = {{"Cr", mat_to_json(s.observation.Cr)},
                      {"envelope", {{"id", s.observation.envelope_id},
                                    {"params", s.observation.envelope_params}}}};
  json rows = json::array();
  for (const auto& row : s.constraints.rows) {
    json r = {{"c", vec_to_json(row.c)}, {"b", row.b}, {"terminal", row.terminal}};
    if (row.at_k >= 0) r["at_k"] = row.at_k;
    rows.push_back(r);
  }
  json obstacles = json::array();
  for (const auto& ob : s.constraints.obstacles)
    obstacles.push_back({{"dims", ob.dims}, {"center", vec_to_json(ob.center)},
                         {"radius", ob.radius}});
  j["constraints"] = {{"rows", rows}, {"obstacles", obstacles}};
  j["costs"] = {{"Qbar", mat_to_json(s.costs.Qbar)}, {"Rbar", mat_to_json(s.costs.Rbar)},
                {"Pbar", mat_to_json(s.costs.Pbar)}, {"Q", mat_to_json(s.costs.Q)},
                {"R", mat_to_json(s.costs.R)},       {"P", mat_to_json(s.costs.P)}};
  if (!s.noise.constant_E())
    throw SpecError("cannot serialize a spec with a state-dependent E hook");
  if (!s.noise.zero_sigma())
    throw SpecError("cannot serialize a spec with a custom sigma hook");
  j["noise"] = {{"Xi", mat_to_json(s.noise.Xi)}, {"E", mat_to_json(s.noise.E_const)},
                {"sigma", "zero"}};
  j["x0"] = vec_to_json(s.x0);
  if (s.goal.cols() == 1) {
    j["goal"] = vec_to_json(s.goal.col(0));
  } else {
    json cols = json::array();
    for (int k = 0; k < s.goal.cols(); ++k) cols.push_back(vec_to_json(s.goal.col(k)));
    j["goal"] = cols;
  }
  return j;
}

inline ProblemSpec spec_from_json(const json& j) {
  ProblemSpec s;
  s.name = j.value("name", "");
  s.nx = j.at("dims").at("nx").get<int>();
  s.nu = j.at("dims").at("nu").get<int>();
  s.nr = j.at("dims").at("nr").get<int>();
  s.T = j.at("horizon").get<int>();
  s.dt = j.at("dt").get<double>();
  s.dynamics = make_dynamics(j.at("dynamics").at("id").get<std::string>(),
                             j.at("dynamics").value("params", std::vector<double>{}));
  const auto& obs = j.at("observation");
  s.observation = make_observation(mat_from_json(obs.at("Cr")),
                                   obs.at("envelope").at("id").get<std::string>(),
                                   obs.at("envelope").value("params", std::vector<double>{}));
  if (j.contains("constraints")) {
    const auto& con = j.at("constraints");
    for (const auto& r : con.value("rows", json::array())) {
      ConstraintRow row;
      row.c = vec_from_json(r.at("c"));
      row.b = r.at("b").get<double>();
      row.terminal = r.value("terminal", false);
      row.at_k = r.value("at_k", -1);
      s.constraints.rows.push_back(row);
    }
    const int nd = s.nx + s.nu;
    auto boxes = [&](const char* key, int off, bool terminal) {
      if (!con.contains(key)) return;
      const auto& box = con.at(key);
      const Vec lo = vec_from_json(box.at("lo"));
      const Vec hi = vec_from_json(box.at("hi"));
      for (int i = 0; i < lo.size(); ++i) s.constraints.add_box(nd, off + i, lo(i), hi(i), terminal);
    };
    boxes("state_box", 0, false);
    boxes("input_box", s.nx, false);
    boxes("terminal_box", 0, true);
    for (const auto& o : con.value("obstacles", json::array())) {
      Obstacle ob;
      ob.dims = o.at("dims").get<std::vector<int>>();
      ob.center = vec_from_json(o.at("center"));
      ob.radius = o.at("radius").get<double>();
      s.constraints.obstacles.push_back(ob);
    }
  }
  const auto& c = j.at("costs");
  s.costs.Qbar = mat_from_json(c.at("Qbar"));
  s.costs.Rbar = mat_from_json(c.at("Rbar"));
  s.costs.Pbar = mat_from_json(c.at("Pbar"));
  s.costs.Q = mat_from_json(c.at("Q"));
  s.costs.R = mat_from_json(c.at("R"));
  s.costs.P = mat_from_json(c.at("P"));
  const auto& n = j.at("noise");
  s.noise.Xi = mat_from_json(n.at("Xi"));
  s.noise.E_const = mat_from_json(n.at("E"));
  s.x0 = vec_from_json(j.at("x0"));
  const auto& g = j.at("goal");
  if (g.is_array() && !g.empty() && g[0].is_array()) {
    s.goal = Mat(s.nx, g.size());
    for (size_t k = 0; k < g.size(); ++k) s.goal.col(static_cast<int>(k)) = vec_from_json(g[k]);
  } else {
    s.goal = Mat(s.nx, 1);
    s.goal.col(0) = vec_from_json(g);
  }
  return s;
}

inline ProblemSpec load_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open spec file: " + path);
  json j;
  in >> j;
  return spec_from_json(j);
}

}  // namespace sls
