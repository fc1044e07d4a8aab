#pragma once

#include <vector>

#include "flsim/model.hpp"

namespace flsim::fed {

// A client's submission for one round: its model plus the claimed sample count.
struct ClientUpdate {
  int client_id = 0;
  nn::ParamVector params;
  long n_samples = 1;
};

// What the server (and the adversary) can see about the round in flight.
struct RoundContext {
  int round = 0;
  nn::ParamVector global;       // w(t)
  nn::ParamVector prev_global;  // w(t-1); equals w(0) at t=0
  std::vector<int> selected;
};

}  // namespace flsim::fed
