#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "mlbn/data_io.hpp"
#include "mlbn/error.hpp"

using namespace mlbn;

TEST_CASE("shortest round-trip formatting") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-310, 1e300, 0.0, 123456789.125, std::nextafter(1.0, 2.0)}) {
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
  CHECK_THROWS_AS(parse_double("1.5x"), IoError);
  CHECK_THROWS_AS(parse_double(""), IoError);
}

TEST_CASE("regression CSV round trip") {
  const RegressionProblem p = gen_regression({.seed = 3, .n_points = 12, .input_dim = 3});
  std::stringstream buf;
  write_regression_csv(buf, p.data);
  std::string header;
  std::getline(std::stringstream(buf.str()), header);
  CHECK(header == "x1,x2,x3,y1,noise_var1");
  const RegressionData back = read_regression_csv(buf);
  CHECK(back.inputs == p.data.inputs);
  CHECK(back.outputs == p.data.outputs);
  CHECK(back.noise_var == p.data.noise_var);

  std::stringstream bad("x1,y1,noise_var1\n1,2,0.1\n1,2,0.2\n");
  CHECK_THROWS_AS(read_regression_csv(bad), IoError);
  std::stringstream ragged("x1,y1,noise_var1\n1,2\n");
  CHECK_THROWS_AS(read_regression_csv(ragged), IoError);
}

TEST_CASE("classification CSV round trip") {
  const ClassificationData d = gen_spiral({.seed = 2, .points_per_class = 20});
  std::stringstream buf;
  write_classification_csv(buf, d);
  const ClassificationData back = read_classification_csv(buf);
  CHECK(back.inputs == d.inputs);
  CHECK(back.labels == d.labels);
  CHECK(back.num_classes == 2);
  std::stringstream frac("x1,label\n0.5,1.5\n");
  CHECK_THROWS_AS(read_classification_csv(frac), IoError);
}

TEST_CASE("trajectory CSV round trip") {
  const RlProblem p = gen_rl({.seed = 4, .horizon = 7, .num_actions = 3, .state_dim = 4, .teacher_level = 2});
  std::stringstream traj;
  std::stringstream trans;
  write_trajectory_csv(traj, p.trajectory);
  write_transition_csv(trans, p.trajectory.transition);
  const RlTrajectory back = read_trajectory_csv(traj, trans);
  CHECK(back.states == p.trajectory.states);
  CHECK(back.actions == p.trajectory.actions);
  CHECK(back.sigma == p.trajectory.sigma);
  REQUIRE(back.num_actions() == 3);
  for (int a = 0; a < 3; ++a) {
    CHECK(back.transition.maps[a] == p.trajectory.transition.maps[a]);
    CHECK(back.transition.offsets[a] == p.trajectory.transition.offsets[a]);
  }
}
