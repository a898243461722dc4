#include "pbp/blending.hpp"
#include "pbp/errors.hpp"
#include "pbp/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace pbp;

namespace {

constexpr double kDeg = kPi / 180.0;

std::size_t floor_steps(const DmpParams& p) {
    double phase = 1.0;
    std::size_t n = 0;
    while (phase > kPhaseFloor) {
        phase = canonical_step(phase, p);
        ++n;
    }
    return n;
}

// A square-wave lateral push: +a for `width` ticks, -a for `width` ticks,
// repeated `cycles` times, starting at `onset`.
OperatorCommand square_push(std::size_t t, std::size_t onset, std::size_t width, int cycles,
                            double a) {
    if (t < onset || t >= onset + 2 * width * static_cast<std::size_t>(cycles)) {
        return {};
    }
    const std::size_t k = (t - onset) / width;
    return {Vec2(0.0, k % 2 == 0 ? a : -a), 0.0};
}

// Perfect tracking: the robot lands on whatever reference it is given.
template <class StepFn>
std::vector<Vec2> closed_loop(Dmp dmp, std::size_t steps, StepFn&& cmd_at,
                              Vec2 (*blend)(Dmp&, const Vec2&, const OperatorCommand&, double)) {
    std::vector<Vec2> path;
    Vec2 robot = dmp.state().y;
    for (std::size_t t = 0; t < steps; ++t) {
        robot = blend(dmp, robot, cmd_at(t), dmp.params().dt);
        path.push_back(robot);
    }
    return path;
}

GoalBank three_goal_bank(const DmpParams& p, double margin = kDefaultHysteresis) {
    return GoalBank::straight_lines(Vec2::Zero(), {Vec2(2.0, 1.0), Vec2(2.0, 0.0), Vec2(2.0, -1.0)},
                                    p, margin);
}

}  // namespace

TEST_CASE("command deadzone") {
    CHECK_FALSE(OperatorCommand{}.active());
    CHECK_FALSE(OperatorCommand{Vec2(1e-3, -1e-3), 1e-3}.active());
    CHECK(OperatorCommand{Vec2(0.0, 1.001e-3), 0.0}.active());
    CHECK(OperatorCommand{Vec2::Zero(), -0.01}.active());
}

TEST_CASE("blend mode names") {
    for (const char* name : {"teleop", "cont", "alt", "nouser", "explicit:0.25"}) {
        CHECK(BlendMode::parse(name).to_string() == name);
    }
    CHECK(BlendMode::parse("explicit:1").alpha == 1.0);
    CHECK_THROWS_AS(BlendMode::parse("shared"), InvalidMode);
    CHECK_THROWS_AS(BlendMode::parse("explicit:"), InvalidMode);
    CHECK_THROWS_AS(BlendMode::parse("explicit:1.5"), InvalidMode);
    CHECK_THROWS_AS(BlendMode::explicit_blend(-0.1), AlphaOutOfRange);
}

TEST_CASE("explicit blend") {
    CHECK(explicit_blend(Vec2(3, 1), Vec2(9, 9), 0.0) == Vec2(3, 1));
    CHECK(explicit_blend(Vec2(3, 1), Vec2(9, 9), 1.0) == Vec2(9, 9));
    CHECK(explicit_blend(Vec2(2, 0), Vec2(4, 0), 0.5) == Vec2(3, 0));
    CHECK_THROWS_AS(explicit_blend(Vec2::Zero(), Vec2::Zero(), 1.01), AlphaOutOfRange);
    CHECK_THROWS_AS(explicit_blend(Vec2::Zero(), Vec2::Zero(), NAN), AlphaOutOfRange);

    SUBCASE("affine in alpha") {
        SplitMix64 rng(21);
        for (int i = 0; i < 1000; ++i) {
            const Vec2 u(rng.uniform(-5, 5), rng.uniform(-5, 5));
            const Vec2 p(rng.uniform(-5, 5), rng.uniform(-5, 5));
            const double a = rng.uniform01();
            CHECK(explicit_blend(u, p, a) == u + a * (p - u));
            const Vec2 weighted = (1.0 - a) * u + a * p;
            CHECK((explicit_blend(u, p, a) - weighted).norm() < 1e-12);
        }
    }
}

TEST_CASE("continuous blending") {
    const DmpParams p;
    const Vec2 g(2.0, 0.0);

    SUBCASE("zero input reproduces the autonomous reference") {
        Dmp blended = straight_line_primitive(Vec2::Zero(), g, p);
        Dmp free = blended;
        Vec2 y = Vec2::Zero();
        Vec2 y_free = Vec2::Zero();
        for (int t = 0; t < 200; ++t) {
            y = continuous_step(blended, y, {}, p.dt);
            y_free = free.step(y_free);
            CHECK(y == y_free);
        }
    }

    SUBCASE("recovers after a burst") {
        const Dmp dmp = straight_line_primitive(Vec2::Zero(), g, p);
        const auto burst = [](std::size_t t) {
            return t >= 30 && t < 40 ? OperatorCommand{Vec2(0.0, 0.1), 0.0} : OperatorCommand{};
        };
        const auto path = closed_loop(dmp, floor_steps(p), burst, continuous_step);
        double max_lateral = 0.0;
        for (const Vec2& y : path) {
            max_lateral = std::max(max_lateral, std::fabs(y.y()));
        }
        CHECK(max_lateral > 0.5);  // the burst did displace the robot
        CHECK((path.back() - g).norm() < 1e-3);
    }

    SUBCASE("phase ignores the input") {
        Dmp a = straight_line_primitive(Vec2::Zero(), g, p);
        Dmp b = a;
        Vec2 ya = Vec2::Zero();
        Vec2 yb = Vec2::Zero();
        SplitMix64 rng(6);
        for (int t = 0; t < 100; ++t) {
            const OperatorCommand cmd{Vec2(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)), 0};
            ya = continuous_step(a, ya, cmd, p.dt);
            yb = continuous_step(b, yb, {}, p.dt);
            CHECK(a.state().phase == b.state().phase);
        }
    }
}

TEST_CASE("alternated blending") {
    const DmpParams p;
    const Vec2 g(2.0, 0.0);

    SUBCASE("active input locks the phase and teleoperates") {
        Dmp dmp = straight_line_primitive(Vec2::Zero(), g, p);
        dmp.step(Vec2::Zero());
        const DmpState before = dmp.state();
        const OperatorCommand cmd{Vec2(0.02, 0.03), 0.0};
        const Vec2 ref = alternated_step(dmp, Vec2(0.1, 0.1), cmd, p.dt);
        CHECK(ref == Vec2(0.1, 0.1) + cmd.u);
        CHECK(dmp.state().phase == before.phase);
        CHECK(dmp.state().y == before.y);
        CHECK(dmp.state().dy == before.dy);
    }

    SUBCASE("idle input matches continuous blending") {
        Dmp a = straight_line_primitive(Vec2::Zero(), g, p);
        Dmp b = a;
        SplitMix64 rng(9);
        for (int t = 0; t < 200; ++t) {
            const Vec2 robot(rng.uniform(-1, 3), rng.uniform(-1, 1));
            CHECK(alternated_step(a, robot, {}, p.dt) == continuous_step(b, robot, {}, p.dt));
        }
    }

    SUBCASE("phase advances exactly when idle") {
        Dmp dmp = straight_line_primitive(Vec2::Zero(), g, p);
        Vec2 robot = Vec2::Zero();
        SplitMix64 rng(10);
        for (int t = 0; t < 400; ++t) {
            OperatorCommand cmd;
            if (rng.uniform01() < 0.4) {
                cmd.u = Vec2(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02));
            }
            const double before = dmp.state().phase;
            robot = alternated_step(dmp, robot, cmd, p.dt);
            CHECK((dmp.state().phase < before) == !cmd.active());
        }
    }

    SUBCASE("same input replay yields different paths with the same goal") {
        const Dmp dmp = straight_line_primitive(Vec2::Zero(), g, p);
        const auto input = [](std::size_t t) { return square_push(t, 20, 15, 2, 0.015); };
        const std::size_t steps = floor_steps(p);
        const auto cont = closed_loop(dmp, steps, input, continuous_step);
        const auto alt = closed_loop(dmp, steps, input, alternated_step);
        double max_gap = 0.0;
        for (std::size_t i = 0; i < steps; ++i) {
            max_gap = std::max(max_gap, (cont[i] - alt[i]).norm());
        }
        CHECK(max_gap > 0.05);
        CHECK((cont.back() - g).norm() < 1e-3);
        CHECK((alt.back() - g).norm() < 1e-3);
    }

    SUBCASE("recovery after random bounded bursts") {
        SplitMix64 rng(31);
        for (int k = 0; k < 30; ++k) {
            const Vec2 goal(rng.uniform(0.5, 2.5), rng.uniform(-1.0, 1.0));
            const Dmp dmp = straight_line_primitive(Vec2::Zero(), goal, p);
            const std::size_t onset = rng.below(100);
            const std::size_t len = 1 + rng.below(40);
            const Vec2 push(rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03));
            const auto input = [&](std::size_t t) {
                return t >= onset && t < onset + len ? OperatorCommand{push, 0.0}
                                                     : OperatorCommand{};
            };
            const std::size_t steps = floor_steps(p) + len;
            CHECK((closed_loop(dmp, steps, input, continuous_step).back() - goal).norm() < 1e-3);
            CHECK((closed_loop(dmp, steps, input, alternated_step).back() - goal).norm() < 1e-3);
        }
    }
}

TEST_CASE("goal estimator") {
    const DmpParams p;

    SUBCASE("argmin examples") {
        GoalBank bank = GoalBank::straight_lines(Vec2::Zero(), {Vec2(1, 0), Vec2(0, 1)}, p, 0.0);
        CHECK(estimate_goal(Vec2::Zero(), 0.0, bank) == 0);
        CHECK(estimate_goal(Vec2::Zero(), kPi / 2, bank) == 1);
    }

    SUBCASE("hysteresis keeps a near tie") {
        const std::vector<Vec2> goals = {Vec2(std::cos(10 * kDeg), std::sin(10 * kDeg)),
                                         Vec2(std::cos(11 * kDeg), std::sin(11 * kDeg))};
        GoalBank bank = GoalBank::straight_lines(Vec2::Zero(), goals, p, 5 * kDeg);
        bank.active_index = 1;
        CHECK(estimate_goal(Vec2::Zero(), 0.0, bank) == 1);
        bank.hysteresis_margin = 0.0;
        CHECK(estimate_goal(Vec2::Zero(), 0.0, bank) == 0);
    }

    SUBCASE("switches only past the margin") {
        // Goals at +-30 deg; goal 0 wins by exactly twice the heading offset.
        const std::vector<Vec2> goals = {Vec2(std::cos(30 * kDeg), std::sin(30 * kDeg)),
                                         Vec2(std::cos(30 * kDeg), -std::sin(30 * kDeg))};
        GoalBank bank = GoalBank::straight_lines(Vec2::Zero(), goals, p, 5 * kDeg);
        bank.active_index = 1;
        CHECK(estimate_goal(Vec2::Zero(), 2.4 * kDeg, bank) == 1);  // 4.8 deg advantage
        CHECK(estimate_goal(Vec2::Zero(), 2.6 * kDeg, bank) == 0);  // 5.2 deg advantage
    }

    SUBCASE("ties go to the lowest index") {
        GoalBank bank = GoalBank::straight_lines(Vec2::Zero(), {Vec2(1, 1), Vec2(1, -1)}, p, 0.0);
        CHECK(estimate_goal(Vec2::Zero(), 0.0, bank) == 0);
        bank.active_index = 1;
        CHECK(estimate_goal(Vec2::Zero(), 0.0, bank) == 1);  // equal angles never dislodge
    }

    SUBCASE("heading wraps") {
        GoalBank bank = GoalBank::straight_lines(Vec2::Zero(), {Vec2(-1, 0.01), Vec2(1, 0)}, p, 0.0);
        CHECK(estimate_goal(Vec2::Zero(), -kPi + 0.01, bank) == 0);
        CHECK(alignment_angle(Vec2::Zero(), 3 * kPi, Vec2(-1, 0)) == doctest::Approx(0.0));
    }

    SUBCASE("scale invariance and idempotence") {
        SplitMix64 rng(44);
        for (int k = 0; k < 500; ++k) {
            std::vector<Vec2> goals;
            const std::size_t n = 2 + rng.below(4);
            for (std::size_t i = 0; i < n; ++i) {
                goals.emplace_back(rng.uniform(-3, 3), rng.uniform(-3, 3));
            }
            const Vec2 robot(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
            const double heading = rng.uniform(-kPi, kPi);
            const double scale = rng.uniform(0.1, 10.0);
            std::vector<Vec2> scaled;
            for (const Vec2& g0 : goals) {
                scaled.push_back(robot + scale * (g0 - robot));
            }
            GoalBank a = GoalBank::straight_lines(robot, goals, p);
            GoalBank b = GoalBank::straight_lines(robot, scaled, p);
            a.active_index = b.active_index = rng.below(n);
            const std::size_t ia = estimate_goal(robot, heading, a);
            CHECK(ia == estimate_goal(robot, heading, b));
            a.active_index = ia;
            CHECK(estimate_goal(robot, heading, a) == ia);
        }
    }

    CHECK_THROWS_AS(GoalBank::straight_lines(Vec2::Zero(), {}, p), EmptyBank);
}

TEST_CASE("multi-goal stepping") {
    const DmpParams p;

    SUBCASE("single goal reduces to the single-primitive algorithms") {
        for (const BlendMode mode : {BlendMode::continuous(), BlendMode::alternated()}) {
            GoalBank bank = GoalBank::straight_lines(Vec2::Zero(), {Vec2(1.5, 0.5)}, p);
            Dmp single = bank.dmps[0];
            Vec2 ya = Vec2::Zero();
            Vec2 yb = Vec2::Zero();
            for (std::size_t t = 0; t < 300; ++t) {
                const OperatorCommand cmd = square_push(t, 30, 10, 3, 0.01);
                ya = multi_goal_step(bank, ya, 0.0, cmd, p.dt, mode).reference;
                yb = mode.kind == BlendKind::PbpContinuous ? continuous_step(single, yb, cmd, p.dt)
                                                           : alternated_step(single, yb, cmd, p.dt);
                CHECK(ya == yb);
            }
        }
    }

    SUBCASE("no-user ignores the command") {
        GoalBank a = three_goal_bank(p);
        GoalBank b = three_goal_bank(p);
        Vec2 ya = Vec2::Zero();
        Vec2 yb = Vec2::Zero();
        for (std::size_t t = 0; t < 100; ++t) {
            const OperatorCommand cmd{Vec2(0.05, -0.02), 0.3};
            ya = multi_goal_step(a, ya, 0.0, cmd, p.dt, BlendMode::no_user()).reference;
            yb = multi_goal_step(b, yb, 0.0, {}, p.dt, BlendMode::continuous()).reference;
            CHECK(ya == yb);
        }
    }

    SUBCASE("errors") {
        GoalBank empty;
        CHECK_THROWS_AS(multi_goal_step(empty, Vec2::Zero(), 0, {}, p.dt, BlendMode::alternated()),
                        EmptyBank);
        GoalBank bank = three_goal_bank(p);
        CHECK_THROWS_AS(multi_goal_step(bank, Vec2::Zero(), 0, {}, p.dt, BlendMode::teleop()),
                        InvalidMode);
        CHECK_THROWS_AS(
            multi_goal_step(bank, Vec2::Zero(), 0, {}, p.dt, BlendMode::explicit_blend(0.5)),
            InvalidMode);
    }

    SUBCASE("alternated freezes every phase iff active") {
        GoalBank bank = three_goal_bank(p);
        Vec2 robot = Vec2::Zero();
        SplitMix64 rng(12);
        for (std::size_t t = 0; t < 300; ++t) {
            OperatorCommand cmd;
            if (rng.uniform01() < 0.3) {
                cmd.u = Vec2(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02));
            }
            std::vector<double> before;
            for (const Dmp& d : bank.dmps) {
                before.push_back(d.state().phase);
            }
            robot = multi_goal_step(bank, robot, 0.0, cmd, p.dt, BlendMode::alternated()).reference;
            for (std::size_t k = 0; k < bank.size(); ++k) {
                CHECK((bank.dmps[k].state().phase < before[k]) == !cmd.active());
            }
        }
    }

    SUBCASE("switching goals never jumps the reference") {
        SplitMix64 rng(77);
        std::size_t switches = 0;
        for (int trial = 0; trial < 20; ++trial) {
            GoalBank bank = three_goal_bank(p);
            Vec2 robot = Vec2::Zero();
            double heading = rng.uniform(-1.0, 1.0);
            std::size_t last = bank.active_index;
            for (std::size_t t = 0; t < 240; ++t) {
                heading += rng.uniform(-0.15, 0.15);
                const Vec2 prev = robot;
                const auto res =
                    multi_goal_step(bank, robot, heading, {}, p.dt, BlendMode::alternated());
                if (res.active_index != last) {
                    ++switches;
                    CHECK((res.reference - prev).norm() <= p.v_max * p.dt + 1e-12);
                }
                last = res.active_index;
                robot = res.reference;
            }
        }
        CHECK(switches > 10);
    }

    SUBCASE("a hundred goals all advance") {
        std::vector<Vec2> goals;
        for (int k = 0; k < 100; ++k) {
            const double a = 2 * kPi * k / 100.0;
            goals.emplace_back(2 * std::cos(a), 2 * std::sin(a));
        }
        GoalBank bank = GoalBank::straight_lines(Vec2::Zero(), goals, p);
        multi_goal_step(bank, Vec2::Zero(), 0.3, {}, p.dt, BlendMode::continuous());
        for (const Dmp& d : bank.dmps) {
            CHECK(d.state().phase < 1.0);
            CHECK(d.state().y != Vec2::Zero());
        }
        CHECK(bank.active_index == estimate_goal(Vec2::Zero(), 0.3, bank));
    }
}
