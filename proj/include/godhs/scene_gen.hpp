#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "godhs/scene.hpp"

namespace godhs {

/// Parameters for procedural scene generation. Rooms are rectangular and
/// laid out in a row, connected by a door chain; carriers are drawn from
/// per-room-type archetype pools; exactly one target item is placed on a
/// carrier the shipped priors associate with it.
struct GenConfig {
  int rooms_min = 2;
  int rooms_max = 3;
  int carriers_min = 1;
  int carriers_max = 2;
  std::string target = "orange";
  std::vector<std::string> catalog = {"orange", "mug",   "book",
                                      "towel",  "laptop", "remote control",
                                      "plate",  "toothbrush"};
  int distractors_max = 2;
  double resolution = 0.05;
  double room_min_side = 3.4;
  double room_max_side = 4.4;
};

/// Item labels the generator knows how to place, with the archetype
/// carriers each may sit on. Exposed so suites can pick targets.
std::vector<std::string> generator_item_labels();

/// The (carrier label, feature) pairs eligible to hold the item. Every
/// pair names an archetype the generator can build and a feature the
/// planner can actually service.
std::vector<std::pair<std::string, Feature>> target_spots(
    const std::string& item);

/// Deterministic procedural scene: pure function of (config, seed). The
/// result passes validate_scene and holds exactly one target item.
Scene generate_scene(const GenConfig& cfg, uint64_t seed);

}  // namespace godhs
