#include "branchfilter/fixtures.hpp"

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace branchfilter {

namespace {

Trajectory make_trajectory(std::initializer_list<double> x,
                           std::initializer_list<double> z) {
  Trajectory t;
  t.x.assign(x);
  t.z.assign(z);
  t.validate();
  return t;
}

const std::array<Fixture, 5>& fixture_table() {
  static const std::array<Fixture, 5> fixtures = {
      Fixture{
          "pi02_lambda031",
          {0.2, 0.28 / 0.9, 0.5},
          100,
          true,
          make_trajectory(
              {100, 111, 111, 109, 124, 111, 127, 142, 157, 159, 179,
               193, 193, 209, 206, 218, 263, 287, 323, 348, 392, 412,
               443, 457, 500, 550, 599, 633, 686, 744, 817},
              {13, 25, 28, 20, 37, 23, 23, 28, 36, 26, 30, 44, 42, 47, 42, 35,
               47, 55, 70, 61, 80, 87, 105, 95, 102, 98, 121, 142, 136, 139,
               173})},
      Fixture{
          "pi04_lambda06",
          {0.4, 0.6, 0.5},
          100,
          true,
          make_trajectory(
              {100, 105, 122, 148, 162, 172, 172, 180, 205, 208, 222,
               273, 304, 308, 333, 353, 392, 415, 451, 450, 452, 470,
               495, 546, 593, 663, 713, 742, 807, 854, 922},
              {44, 34, 46, 56, 59, 79, 57, 62, 80, 88, 76, 100, 139, 117, 148,
               144, 155, 161, 187, 199, 178, 185, 198, 204, 228, 270, 304, 311,
               352, 349, 360})},
      Fixture{
          "pi06_lambda097",
          {0.6, 0.68 / 0.7, 0.5},
          100,
          true,
          make_trajectory(
              {100, 103, 113, 98, 111, 113, 126, 141, 150, 163, 180,
               190, 217, 232, 247, 263, 264, 277, 325, 371, 423, 413,
               437, 479, 491, 513, 570, 615, 610, 628, 684},
              {60, 61, 78, 60, 69, 72, 75, 81, 92, 104, 108, 111, 132, 149,
               151, 162, 157, 165, 181, 213, 266, 233, 256, 296, 302, 307, 348,
               389, 371, 379, 392})},
      Fixture{
          "pi08_lambda147",
          {0.8, 0.88 / 0.6, 0.5},
          100,
          true,
          make_trajectory(
              {100, 102, 99, 99, 100, 109, 120, 125, 153, 173, 190,
               216, 217, 238, 257, 275, 279, 289, 337, 360, 353, 389,
               411, 431, 445, 463, 500, 533, 602, 654, 722},
              {81, 88, 79, 83, 80, 90, 96, 96, 122, 132, 149, 173, 179, 189,
               206, 223, 231, 237, 269, 297, 287, 312, 331, 348, 372, 383, 406,
               428, 482, 515, 573})},
      Fixture{
          "pi04_lambda06_x0unknown",
          {0.4, 0.6, 0.5},
          100,
          false,
          make_trajectory(
              {100, 99, 109, 125, 134, 150, 157, 187, 204, 218, 241,
               238, 258, 288, 294, 321, 333, 357, 410, 433, 483, 518,
               555, 607, 613, 659, 714, 783, 886, 984, 1030},
              {41, 42, 42, 53, 52, 54, 64, 73, 85, 80, 103, 90, 100, 127, 114,
               135, 141, 120, 154, 176, 193, 211, 223, 264, 250, 268, 291, 302,
               327, 411, 416})},
  };
  return fixtures;
}

}  // namespace

std::span<const Fixture> bundled_fixtures() { return fixture_table(); }

const Fixture& fixture_by_name(std::string_view name) {
  for (const Fixture& f : fixture_table()) {
    if (f.name == name) return f;
  }
  throw std::invalid_argument("unknown fixture: " + std::string(name));
}

}  // namespace branchfilter
