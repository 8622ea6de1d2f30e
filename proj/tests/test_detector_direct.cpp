#include <catch2/catch_amalgamated.hpp>

#include "ncmimo/detector_direct.hpp"
#include "ncmimo/divergence.hpp"
#include "ncmimo/harness.hpp"
#include "oracles.hpp"

using namespace ncmimo;

namespace {

struct Fixture {
  ChannelProfile profile;
  FadingCovariance fading;
  CodewordAlphabet alphabet;
  double noise_power;

  Fixture(int K, int nt, int nr, double s2, std::uint64_t seed = 1)
      : profile(ChannelProfile::triangular(nt, nr)),
        fading{},
        alphabet(orthogonal_pair_alphabet(K, nt, seed)),
        noise_power(s2) {
    if (nt > 1) profile.set_ut(random_unitary(nt, seed + 1));
    fading = assemble_fading_covariance(profile, nr);
  }
};

}  // namespace

TEST_CASE("build_block_covariance") {
  SECTION("noise-only blocks") {
    FadingCovariance fc;
    fc.nr = 8;
    fc.eta = 0.0;
    for (int m = 0; m < 8; ++m) fc.blocks.push_back(MatC::Zero(1, 1));
    Codeword cw;
    cw.matrix = MatC::Ones(4, 1);
    auto cov = build_block_covariance(cw, fc, 0.3);
    CHECK((cov.blocks[0] - 0.3 * MatC::Identity(4, 4)).norm() < 1e-14);
    for (int n = 1; n < 8; ++n) CHECK(cov.blocks[n].norm() == 0.0);
  }
  SECTION("kronecker brute-force oracle") {
    Fixture f(4, 1, 4, 0.5);
    auto cov = build_block_covariance(f.alphabet.codewords[0], f.fading, 0.5);
    MatC big = cov.assemble();
    MatC oracle = oracles::kron_block_covariance(
        f.alphabet.codewords[0].matrix, f.fading.assemble(), 0.5, 4);
    CHECK((big - oracle).norm() <= 1e-9);
  }
  SECTION("K-block-Toeplitz structure is exact") {
    Fixture f(4, 2, 8, 0.5, 3);
    auto cov = build_block_covariance(f.alphabet.codewords[1], f.fading, 0.5);
    MatC big = cov.assemble();
    for (int p = 0; p + 1 < 8; ++p)
      for (int q = 0; q + 1 < 8; ++q)
        CHECK((big.block(p * 4, q * 4, 4, 4) -
               big.block((p + 1) * 4, (q + 1) * 4, 4, 4))
                  .norm() == 0.0);
  }
  SECTION("rejects nonpositive noise power") {
    Fixture f(4, 1, 4, 0.5);
    CHECK_THROWS_AS(
        build_block_covariance(f.alphabet.codewords[0], f.fading, 0.0),
        std::invalid_argument);
  }
}

TEST_CASE("precompute_direct log-determinants") {
  SECTION("noise-only gives ln(noise power)") {
    FadingCovariance fc;
    fc.nr = 4;
    for (int m = 0; m < 4; ++m) fc.blocks.push_back(MatC::Zero(1, 1));
    CodewordAlphabet a = orthogonal_pair_alphabet(4, 1, 2);
    for (double s2 : {0.5, 2.0}) {
      auto state = precompute_direct(a, fc, s2);
      for (int j = 0; j < 2; ++j)
        CHECK(state.entries[j].log_det_norm ==
              Catch::Approx(std::log(s2)).margin(1e-12));
    }
    // Scaling the noise floor shifts every log-det by ln c.
    auto s1 = precompute_direct(a, fc, 0.5);
    auto s4 = precompute_direct(a, fc, 2.0);
    CHECK(s4.entries[0].log_det_norm - s1.entries[0].log_det_norm ==
          Catch::Approx(std::log(4.0)).margin(1e-12));
  }
  SECTION("matches dense eigen log-det oracle") {
    Fixture f(4, 1, 4, 0.7);
    auto state = precompute_direct(f.alphabet, f.fading, 0.7);
    for (int j = 0; j < 2; ++j) {
      auto cov = build_block_covariance(f.alphabet.codewords[j], f.fading, 0.7);
      const double oracle = oracles::eigen_log_det(cov.assemble()) / 16.0;
      CHECK(state.entries[j].log_det_norm ==
            Catch::Approx(oracle).epsilon(1e-8));
    }
  }
  SECTION("dimension cap enforced") {
    Fixture f(4, 1, 8, 0.7);
    CHECK_THROWS_AS(precompute_direct(f.alphabet, f.fading, 0.7, 16),
                    std::invalid_argument);
  }
  SECTION("non-PSD covariance raises a numerical error") {
    BlockCovariance bad;
    bad.nr = 2;
    bad.noise_power = 1.0;
    bad.blocks = {-MatC::Identity(2, 2), MatC::Zero(2, 2)};
    CHECK_THROWS_AS(precompute_direct(std::vector<BlockCovariance>{bad}),
                    NumericalError);
  }
}

TEST_CASE("ml_metric_direct") {
  Fixture f(4, 1, 4, 0.6, 5);
  auto state = precompute_direct(f.alphabet, f.fading, 0.6);

  SECTION("zero observation returns the log-det term") {
    ReceivedBlock y{VecC::Zero(16)};
    for (int j = 0; j < 2; ++j)
      CHECK(ml_metric_direct(y, state, j) ==
            Catch::Approx(state.entries[j].log_det_norm).margin(1e-14));
  }
  SECTION("matches dense explicit-inverse oracle") {
    auto rng = make_rng(7);
    for (int j = 0; j < 2; ++j) {
      MatC sigma =
          build_block_covariance(f.alphabet.codewords[j], f.fading, 0.6)
              .assemble();
      for (int t = 0; t < 8; ++t) {
        VecC y(16);
        for (int i = 0; i < 16; ++i) y(i) = complex_normal(rng, 1.0);
        const double oracle = oracles::dense_metric(y, sigma);
        CHECK(ml_metric_direct({y}, state, j) ==
              Catch::Approx(oracle).epsilon(1e-8));
      }
    }
  }
  SECTION("quadratic term under the matched hypothesis averages to one") {
    const int draws = 10000;
    auto rng = make_rng(11);
    double acc = 0.0, acc2 = 0.0;
    for (int t = 0; t < draws; ++t) {
      auto y = simulate_observation(f.alphabet.codewords[0], f.profile, 4, 0.6,
                                    rng);
      const double q =
          ml_metric_direct(y, state, 0) - state.entries[0].log_det_norm;
      REQUIRE(q >= 0.0);
      acc += q;
      acc2 += q * q;
    }
    const double mean = acc / draws;
    const double se = std::sqrt((acc2 / draws - mean * mean) / double(draws));
    CHECK(std::abs(mean - 1.0) <= 3 * se);
  }
  SECTION("batched metrics equal the scalar path") {
    auto rng = make_rng(13);
    MatC ys(16, 5);
    for (int c = 0; c < 5; ++c)
      for (int i = 0; i < 16; ++i) ys(i, c) = complex_normal(rng, 1.0);
    MatR m = direct_metrics(ys, state);
    for (int c = 0; c < 5; ++c)
      for (int j = 0; j < 2; ++j)
        CHECK(m(j, c) == Catch::Approx(ml_metric_direct({ys.col(c)}, state, j))
                             .margin(1e-12));
  }
}

TEST_CASE("detect_direct") {
  SECTION("single-codeword alphabet always decides 0") {
    Fixture f(4, 1, 4, 0.6);
    CodewordAlphabet one;
    one.K = 4;
    one.nt = 1;
    one.codewords = {f.alphabet.codewords[0]};
    auto state = precompute_direct(one, f.fading, 0.6);
    auto rng = make_rng(3);
    for (int t = 0; t < 32; ++t) {
      VecC y(16);
      for (int i = 0; i < 16; ++i) y(i) = complex_normal(rng, 1.0);
      CHECK(detect_direct({y}, state) == 0);
    }
  }
  SECTION("deep-noise behavior") {
    // At enormous noise the log-det gap, -1/(2*noise), is cancelled exactly
    // by the mean of the quadratic-term difference, so the ML decision
    // degenerates to an unbiased coin flip: neither index is ever favored
    // beyond binomial fluctuation, and the error rate sits at 1/2.
    const double s2 = 1e6;
    const int nr = 16;
    Fixture f(6, 2, nr, s2, 9);
    auto state = precompute_direct(f.alphabet, f.fading, s2);
    const double delta_l =
        state.entries[1].log_det_norm - state.entries[0].log_det_norm;
    CHECK(delta_l == Catch::Approx(-0.5 / s2).epsilon(1e-3));
    auto rng = make_rng(17);
    const int draws = 1000;
    int zeros = 0;
    for (int t = 0; t < draws; ++t) {
      auto y = simulate_observation(f.alphabet.codewords[t % 2], f.profile, nr,
                                    s2, rng);
      zeros += detect_direct(y, state) == 0;
    }
    const double se = std::sqrt(0.25 / draws);
    CHECK(std::abs(zeros / double(draws) - 0.5) <= 3 * se);
  }
  SECTION("high-SNR sanity on the orthogonal pair") {
    const double s2 = 1e-4;
    Fixture f(6, 2, 32, s2, 13);
    auto state = precompute_direct(f.alphabet, f.fading, s2);
    auto rng = make_rng(23);
    int correct = 0;
    for (int t = 0; t < 1000; ++t) {
      MatC h = sample_channel(f.profile, 32, f.fading.eta, rng);
      MatC ymat = f.alphabet.codewords[0].matrix * h;
      ReceivedBlock y{Eigen::Map<VecC>(ymat.data(), 6 * 32)};
      correct += detect_direct(y, state) == 0;
    }
    CHECK(correct >= 990);
  }
  SECTION("empty alphabet rejected") {
    DirectDetectorState empty;
    CHECK_THROWS_AS(detect_direct({VecC::Zero(4)}, empty),
                    std::invalid_argument);
  }
}

TEST_CASE("LLR expectation matches the pairwise KLD") {
  Fixture f(4, 1, 8, 0.8, 19);
  auto state = precompute_direct(f.alphabet, f.fading, 0.8);
  auto cov_i = build_block_covariance(f.alphabet.codewords[0], f.fading, 0.8);
  auto cov_j = build_block_covariance(f.alphabet.codewords[1], f.fading, 0.8);
  const double kld = kld_direct(cov_i, cov_j);

  const int draws = 10000;
  auto rng = make_rng(29);
  double acc = 0.0, acc2 = 0.0;
  for (int t = 0; t < draws; ++t) {
    auto y =
        simulate_observation(f.alphabet.codewords[0], f.profile, 8, 0.8, rng);
    const double llr =
        ml_metric_direct(y, state, 1) - ml_metric_direct(y, state, 0);
    acc += llr;
    acc2 += llr * llr;
  }
  const double mean = acc / draws;
  const double se = std::sqrt((acc2 / draws - mean * mean) / double(draws));
  CHECK(std::abs(mean - kld) <= 3 * se);
}
