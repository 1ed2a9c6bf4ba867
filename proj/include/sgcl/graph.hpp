#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sgcl/common.hpp"

namespace sgcl {

// Ego-relative proximity classes, ordered from farthest to closest.
enum class ProximityRel { visible = 0, near = 1, near_collision = 2 };

inline constexpr int kNumRelations = 3;
inline constexpr int kNumActions = 7;

const char* to_string(ProximityRel rel);
std::optional<ProximityRel> proximity_from_string(const std::string& s);

// Thresholds closed on the left: rid <= 0.15 -> visible, <= 0.30 -> near, else near_collision.
ProximityRel rid_to_proximity(double rid);

struct Vocab {
  std::vector<std::string> agent_classes;  // must contain "Ego"
  std::vector<std::string> agent_states;   // may be empty

  static const std::vector<std::string>& actions();  // the fixed 7-label set
  static Vocab defaults();

  int ego_class() const;
  int class_index(const std::string& name) const;   // -1 when absent
  int state_index(const std::string& name) const;   // -1 when absent
  static int action_index(const std::string& name); // -1 when absent
  int node_feature_dim() const {
    return static_cast<int>(agent_classes.size() + agent_states.size());
  }
  void validate() const;
};

void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

struct SceneNode {
  std::string id;
  int class_idx = 0;
  std::optional<int> state_idx;
  std::optional<double> rid;  // relative inverse depth in [0,1]
};

// Stored once per agent as (agent, ego, rel); message passing treats edges as undirected.
struct SceneEdge {
  std::string src;
  std::string dst;
  ProximityRel rel = ProximityRel::visible;
};

struct SceneGraph {
  std::vector<SceneNode> nodes;
  std::vector<SceneEdge> edges;

  int ego_index(const Vocab& vocab) const;  // -1 when absent
  int node_index(const std::string& id) const;
  void validate(const Vocab& vocab) const;  // one ego, star topology, valid indices
};

// Star graph over one ego: every other node gets one edge to ego labeled by its rid.
SceneGraph build_graph(std::vector<SceneNode> nodes, const Vocab& vocab);

// Row v = one-hot(class) | one-hot(state), zeros when the state is absent. Row-major N x d.
std::vector<double> encode_features(const SceneGraph& g, const Vocab& vocab);

struct SceneSequence {
  std::string id;
  std::string video_id;
  std::vector<int> frame_ids;  // strictly increasing
  std::vector<SceneGraph> graphs;
  std::optional<int> label;  // ego action in the frame after the window

  int length() const { return static_cast<int>(graphs.size()); }
  void validate(const Vocab& vocab) const;
};

struct VideoFrames {
  std::string video_id;
  std::vector<int> frame_ids;
  std::vector<SceneGraph> graphs;
  std::vector<int> actions;  // per-frame ego action
};

// Keeps every stride-th frame, then emits every n-frame window whose following
// retained frame exists; that frame's action becomes the label.
std::vector<SceneSequence> window_video(const VideoFrames& video, int n, int stride);

struct Dataset {
  Vocab vocab;
  std::vector<SceneSequence> seqs;
};

// JSONL, one sequence per line; see README for the record schema.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path, Vocab vocab);

// Deterministic shuffle; |train| = round-half-up(ratio * size).
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double ratio, uint64_t seed);

}  // namespace sgcl
