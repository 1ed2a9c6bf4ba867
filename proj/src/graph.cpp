#include "sgcl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace sgcl {

using json = nlohmann::ordered_json;

const char* to_string(ProximityRel rel) {
  switch (rel) {
    case ProximityRel::visible: return "visible";
    case ProximityRel::near: return "near";
    case ProximityRel::near_collision: return "near_collision";
  }
  return "?";
}

std::optional<ProximityRel> proximity_from_string(const std::string& s) {
  if (s == "visible") return ProximityRel::visible;
  if (s == "near") return ProximityRel::near;
  if (s == "near_collision") return ProximityRel::near_collision;
  return std::nullopt;
}

ProximityRel rid_to_proximity(double rid) {
  if (!(rid >= 0.0 && rid <= 1.0))
    throw DataError("rid_to_proximity: rid " + fmt_double(rid) + " outside [0,1]");
  if (rid <= 0.15) return ProximityRel::visible;
  if (rid <= 0.30) return ProximityRel::near;
  return ProximityRel::near_collision;
}

const std::vector<std::string>& Vocab::actions() {
  static const std::vector<std::string> kActions = {"Stop",   "Mov",    "TurRht", "TurLft",
                                                    "MovRht", "MovLft", "Ovtak"};
  return kActions;
}

Vocab Vocab::defaults() {
  Vocab v;
  v.agent_classes = {"Ego", "Car", "LarVeh", "Bus", "Cyc", "Ped", "TL", "OthVeh"};
  v.agent_states = {"MovTow", "MovAway", "Stopped", "HazLit", "Red", "Amber", "Green"};
  return v;
}

int Vocab::ego_class() const { return class_index("Ego"); }

int Vocab::class_index(const std::string& name) const {
  for (size_t i = 0; i < agent_classes.size(); ++i)
    if (agent_classes[i] == name) return static_cast<int>(i);
  return -1;
}

int Vocab::state_index(const std::string& name) const {
  for (size_t i = 0; i < agent_states.size(); ++i)
    if (agent_states[i] == name) return static_cast<int>(i);
  return -1;
}

int Vocab::action_index(const std::string& name) {
  const auto& a = actions();
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] == name) return static_cast<int>(i);
  return -1;
}

void Vocab::validate() const {
  if (ego_class() < 0) throw DataError("vocab: agent_classes must contain 'Ego'");
  std::set<std::string> seen(agent_classes.begin(), agent_classes.end());
  if (seen.size() != agent_classes.size()) throw DataError("vocab: duplicate agent class");
  std::set<std::string> states(agent_states.begin(), agent_states.end());
  if (states.size() != agent_states.size()) throw DataError("vocab: duplicate agent state");
}

void save_vocab(const Vocab& vocab, const std::string& path) {
  json j;
  j["agent_classes"] = vocab.agent_classes;
  j["agent_states"] = vocab.agent_states;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("save_vocab: cannot open " + path);
  out << j.dump(2) << "\n";
}

Vocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_vocab: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("load_vocab: " + path + ": " + e.what());
  }
  Vocab v;
  v.agent_classes = j.at("agent_classes").get<std::vector<std::string>>();
  v.agent_states = j.at("agent_states").get<std::vector<std::string>>();
  v.validate();
  return v;
}

int SceneGraph::ego_index(const Vocab& vocab) const {
  int ego_cls = vocab.ego_class();
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].class_idx == ego_cls) return static_cast<int>(i);
  return -1;
}

int SceneGraph::node_index(const std::string& id) const {
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

void SceneGraph::validate(const Vocab& vocab) const {
  int ego_cls = vocab.ego_class();
  int num_classes = static_cast<int>(vocab.agent_classes.size());
  int num_states = static_cast<int>(vocab.agent_states.size());
  int ego_count = 0;
  std::set<std::string> ids;
  for (const auto& n : nodes) {
    if (n.class_idx < 0 || n.class_idx >= num_classes)
      throw DataError("graph: node " + n.id + " has invalid class index");
    if (n.state_idx && (*n.state_idx < 0 || *n.state_idx >= num_states))
      throw DataError("graph: node " + n.id + " has invalid state index");
    if (n.rid && !(*n.rid >= 0.0 && *n.rid <= 1.0))
      throw DataError("graph: node " + n.id + " has rid outside [0,1]");
    if (!ids.insert(n.id).second) throw DataError("graph: duplicate node id " + n.id);
    if (n.class_idx == ego_cls) ++ego_count;
  }
  if (ego_count != 1)
    throw DataError("graph: expected exactly one ego node, found " + std::to_string(ego_count));

  int ego = ego_index(vocab);
  const std::string& ego_id = nodes[ego].id;
  std::unordered_map<std::string, int> degree;
  std::set<std::pair<std::string, std::string>> seen_edges;
  for (const auto& e : edges) {
    if (node_index(e.src) < 0 || node_index(e.dst) < 0)
      throw DataError("graph: edge endpoint missing: " + e.src + " -> " + e.dst);
    const std::string* agent = nullptr;
    if (e.dst == ego_id && e.src != ego_id) agent = &e.src;
    else if (e.src == ego_id && e.dst != ego_id) agent = &e.dst;
    else throw DataError("graph: edge " + e.src + " -> " + e.dst + " does not touch ego");
    if (!seen_edges.insert({std::min(e.src, e.dst), std::max(e.src, e.dst)}).second)
      throw DataError("graph: duplicate edge " + e.src + " -> " + e.dst);
    degree[*agent] += 1;
  }
  for (const auto& n : nodes) {
    if (n.class_idx == ego_cls) continue;
    if (degree[n.id] != 1)
      throw DataError("graph: node " + n.id + " must have exactly one edge to ego, found " +
                      std::to_string(degree[n.id]));
  }
}

SceneGraph build_graph(std::vector<SceneNode> nodes, const Vocab& vocab) {
  int ego_cls = vocab.ego_class();
  int ego = -1, ego_count = 0;
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].class_idx == ego_cls) {
      ego = static_cast<int>(i);
      ++ego_count;
    }
  if (ego_count != 1)
    throw DataError("build_graph: expected exactly one ego node, found " +
                    std::to_string(ego_count));
  SceneGraph g;
  g.nodes = std::move(nodes);
  const std::string& ego_id = g.nodes[ego].id;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    if (static_cast<int>(i) == ego) continue;
    const auto& n = g.nodes[i];
    if (!n.rid) throw DataError("build_graph: node " + n.id + " is missing rid");
    g.edges.push_back({n.id, ego_id, rid_to_proximity(*n.rid)});
  }
  g.validate(vocab);
  return g;
}

std::vector<double> encode_features(const SceneGraph& g, const Vocab& vocab) {
  int num_classes = static_cast<int>(vocab.agent_classes.size());
  int d = vocab.node_feature_dim();
  std::vector<double> x(g.nodes.size() * static_cast<size_t>(d), 0.0);
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    if (n.class_idx < 0 || n.class_idx >= num_classes)
      throw DataError("encode_features: node " + n.id + " has invalid class index");
    x[i * d + n.class_idx] = 1.0;
    if (n.state_idx) {
      if (*n.state_idx < 0 || *n.state_idx >= static_cast<int>(vocab.agent_states.size()))
        throw DataError("encode_features: node " + n.id + " has invalid state index");
      x[i * d + num_classes + *n.state_idx] = 1.0;
    }
  }
  return x;
}

void SceneSequence::validate(const Vocab& vocab) const {
  if (graphs.empty()) throw DataError("sequence " + id + ": empty");
  if (frame_ids.size() != graphs.size())
    throw DataError("sequence " + id + ": frame_ids/graphs length mismatch");
  for (size_t i = 1; i < frame_ids.size(); ++i)
    if (frame_ids[i] <= frame_ids[i - 1])
      throw DataError("sequence " + id + ": frame ids not strictly increasing");
  if (label && (*label < 0 || *label >= kNumActions))
    throw DataError("sequence " + id + ": label out of range");
  try {
    for (const auto& g : graphs) g.validate(vocab);
  } catch (const DataError& e) {
    throw DataError("sequence " + id + ": " + e.what());
  }
}

std::vector<SceneSequence> window_video(const VideoFrames& video, int n, int stride) {
  if (n < 1) throw DataError("window_video: n must be >= 1");
  if (stride < 1) throw DataError("window_video: stride must be >= 1");
  if (video.graphs.size() != video.actions.size() || video.graphs.size() != video.frame_ids.size())
    throw DataError("window_video: frames/actions/ids length mismatch in " + video.video_id);

  std::vector<size_t> retained;
  for (size_t i = 0; i < video.graphs.size(); i += static_cast<size_t>(stride)) retained.push_back(i);

  std::vector<SceneSequence> out;
  if (retained.size() < static_cast<size_t>(n) + 1) return out;
  for (size_t start = 0; start + n < retained.size(); ++start) {
    SceneSequence seq;
    seq.video_id = video.video_id;
    seq.id = video.video_id + "_w" + std::to_string(start);
    for (int k = 0; k < n; ++k) {
      size_t f = retained[start + k];
      seq.frame_ids.push_back(video.frame_ids[f]);
      seq.graphs.push_back(video.graphs[f]);
    }
    seq.label = video.actions[retained[start + n]];
    out.push_back(std::move(seq));
  }
  return out;
}

namespace {

json node_to_json(const SceneNode& n, const Vocab& vocab) {
  json j;
  j["id"] = n.id;
  j["cls"] = vocab.agent_classes.at(n.class_idx);
  j["state"] = n.state_idx ? json(vocab.agent_states.at(*n.state_idx)) : json(nullptr);
  j["rid"] = n.rid ? json(*n.rid) : json(nullptr);
  return j;
}

json sequence_to_json(const SceneSequence& seq, const Vocab& vocab) {
  json j;
  j["id"] = seq.id;
  j["video_id"] = seq.video_id;
  j["label"] = seq.label ? json(Vocab::actions().at(*seq.label)) : json(nullptr);
  json frames = json::array();
  for (size_t f = 0; f < seq.graphs.size(); ++f) {
    json jf;
    jf["frame_id"] = seq.frame_ids[f];
    json nodes = json::array();
    for (const auto& n : seq.graphs[f].nodes) nodes.push_back(node_to_json(n, vocab));
    jf["nodes"] = std::move(nodes);
    json edges = json::array();
    for (const auto& e : seq.graphs[f].edges)
      edges.push_back(json{{"src", e.src}, {"dst", e.dst}, {"rel", to_string(e.rel)}});
    jf["edges"] = std::move(edges);
    frames.push_back(std::move(jf));
  }
  j["frames"] = std::move(frames);
  return j;
}

SceneNode node_from_json(const json& j, const Vocab& vocab, const std::string& seq_id) {
  SceneNode n;
  n.id = j.at("id").get<std::string>();
  std::string cls = j.at("cls").get<std::string>();
  int ci = vocab.class_index(cls);
  if (ci < 0) throw DataError("sequence " + seq_id + ": unknown agent class '" + cls + "'");
  n.class_idx = ci;
  if (j.contains("state") && !j.at("state").is_null()) {
    std::string st = j.at("state").get<std::string>();
    int si = vocab.state_index(st);
    if (si < 0) throw DataError("sequence " + seq_id + ": unknown agent state '" + st + "'");
    n.state_idx = si;
  }
  if (j.contains("rid") && !j.at("rid").is_null()) n.rid = j.at("rid").get<double>();
  return n;
}

SceneSequence sequence_from_json(const json& j, const Vocab& vocab) {
  SceneSequence seq;
  seq.id = j.at("id").get<std::string>();
  seq.video_id = j.at("video_id").get<std::string>();
  if (j.contains("label") && !j.at("label").is_null()) {
    std::string lbl = j.at("label").get<std::string>();
    int li = Vocab::action_index(lbl);
    if (li < 0) throw DataError("sequence " + seq.id + ": unknown action label '" + lbl + "'");
    seq.label = li;
  }
  for (const auto& jf : j.at("frames")) {
    seq.frame_ids.push_back(jf.at("frame_id").get<int>());
    SceneGraph g;
    for (const auto& jn : jf.at("nodes")) g.nodes.push_back(node_from_json(jn, vocab, seq.id));
    if (jf.contains("edges") && !jf.at("edges").is_null() && !jf.at("edges").empty()) {
      for (const auto& je : jf.at("edges")) {
        SceneEdge e;
        e.src = je.at("src").get<std::string>();
        e.dst = je.at("dst").get<std::string>();
        std::string rel = je.at("rel").get<std::string>();
        auto r = proximity_from_string(rel);
        if (!r) throw DataError("sequence " + seq.id + ": unknown relation '" + rel + "'");
        e.rel = *r;
        g.edges.push_back(std::move(e));
      }
      seq.graphs.push_back(std::move(g));
    } else {
      // no edges recorded: derive the star from per-node rid
      seq.graphs.push_back(build_graph(std::move(g.nodes), vocab));
    }
  }
  seq.validate(vocab);
  return seq;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("save_dataset: cannot open " + path);
  for (const auto& seq : ds.seqs) out << sequence_to_json(seq, ds.vocab).dump() << "\n";
  if (!out) throw DataError("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path, Vocab vocab) {
  vocab.validate();
  std::ifstream in(path);
  if (!in) throw DataError("load_dataset: cannot open " + path);
  Dataset ds;
  ds.vocab = std::move(vocab);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("load_dataset: " + path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ds.seqs.push_back(sequence_from_json(j, ds.vocab));
  }
  return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double ratio, uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw DataError("split_dataset: ratio must be in (0,1)");
  std::vector<size_t> order(ds.seqs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x5b17));
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_int(i)]);
  size_t n_train =
      static_cast<size_t>(std::floor(ratio * static_cast<double>(ds.seqs.size()) + 0.5));
  Dataset train{ds.vocab, {}}, val{ds.vocab, {}};
  for (size_t i = 0; i < order.size(); ++i)
    (i < n_train ? train : val).seqs.push_back(ds.seqs[order[i]]);
  return {std::move(train), std::move(val)};
}

}  // namespace sgcl
