#include <catch2/catch_amalgamated.hpp>

#include "multiref/training/optimizer.hpp"
#include "multiref/training/schedule.hpp"

using namespace multiref;

TEST_CASE("learning rate never decays while validation improves") {
  LrSchedule sched(0.001, 0.75, 3, 1e-7);
  double loss = 10.0;
  for (int i = 0; i < 30; ++i) {
    auto u = sched.update(loss);
    CHECK(u.lr == 0.001);
    CHECK_FALSE(u.stop);
    loss -= 0.5;  // always a real improvement
  }
}

TEST_CASE("four consecutive non-improvements trigger exactly one decay") {
  LrSchedule sched(0.001, 0.75, 3, 1e-7);
  sched.update(1.0);  // establishes the best
  int decays = 0;
  for (int i = 0; i < 4; ++i) {
    auto u = sched.update(1.0);
    if (u.decayed) ++decays;
  }
  CHECK(decays == 1);
  CHECK(sched.lr() == Catch::Approx(0.00075));
}

TEST_CASE("improvements below the threshold do not reset patience") {
  LrSchedule sched(0.001, 0.75, 3, 1e-7, 1e-4);
  sched.update(1.0);
  int decays = 0;
  for (int i = 1; i <= 4; ++i) {
    auto u = sched.update(1.0 - 1e-6 * i);  // tiny, below min improvement
    if (u.decayed) ++decays;
  }
  CHECK(decays == 1);
}

TEST_CASE("repeated non-improvement stops after exactly 33 decays") {
  // ceil(log(1e-7 / 1e-3) / log 0.75) = 33
  LrSchedule sched(0.001, 0.75, 3, 1e-7);
  sched.update(1.0);
  int decays = 0;
  int validations = 0;
  bool stopped = false;
  while (!stopped && validations < 10'000) {
    auto u = sched.update(1.0);
    ++validations;
    if (u.decayed) ++decays;
    stopped = u.stop;
  }
  CHECK(stopped);
  CHECK(decays == 33);
  CHECK(sched.lr() < 1e-7);
  CHECK(sched.lr() / 0.75 >= 1e-7);  // one decay earlier it was still above
}

TEST_CASE("schedule validation rejects inconsistent settings") {
  TrainSchedule s;
  s.validate();  // defaults are fine
  CHECK(s.initial_lr == 0.001);
  CHECK(s.decay_rate == 0.75);
  CHECK(s.decay_patience == 3);
  CHECK(s.stop_lr == 1e-7);
  CHECK(s.batch_size == 30);
  CHECK(s.kl_anneal_steps == 40000);

  TrainSchedule bad = s;
  bad.decay_rate = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.stop_lr = 0.01;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = s;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  CHECK_THROWS_AS(LrSchedule(0.001, 1.0, 3, 1e-7), ConfigError);
}

TEST_CASE("schedule round trips through JSON with exact field names") {
  TrainSchedule s;
  s.initial_lr = 0.002;
  s.max_epochs = 7;
  nlohmann::json j = s;
  CHECK(j.contains("initial_lr"));
  CHECK(j.contains("decay_patience"));
  CHECK(j.contains("kl_anneal_steps"));
  auto back = j.get<TrainSchedule>();
  CHECK(back.initial_lr == 0.002);
  CHECK(back.max_epochs == 7);
  CHECK(back.batch_size == 30);
}
