// Replays a workload trace through the page lifecycle and prints the page
// table after every event.

#include <fstream>
#include <iostream>

#include "cachebar/workload.hpp"

using namespace cachebar;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: ksm_walkthrough <trace>\n";
    return 2;
  }
  std::ifstream in(argv[1]);
  if (!in) {
    std::cerr << "cannot open " << argv[1] << "\n";
    return 2;
  }
  try {
    const Workload wl = parse_workload(in);
    CacheState cache(CacheGeometry::make(4, 4, 64, 64));
    PageLifecycle life(cache);
    for (const Event& e : wl) {
      apply(life, e);
      life.check_invariants();
      std::cout << format_event(e) << "\n";
      for (const auto& [id, page] : life.pages()) {
        std::cout << "  page " << id << " " << to_string(page.state) << " mapped by";
        if (auto it = life.counters().rows().find(id); it != life.counters().rows().end())
          for (const auto& [d, n] : it->second) std::cout << " d" << d << "x" << n;
        std::cout << "\n";
      }
    }
    std::cout << "physical pages in use: " << life.mapped_page_count() << "\n";
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
