// Monte Carlo harness for noncoherent massive-MIMO uplink detection.
//
// Runs paired error-rate sweeps of the direct and spectral ML detectors over
// an (Nr, SNR) grid, the complexity benchmark, pairwise divergence reports,
// or a CSM debug dump. Exit codes: 0 success, 1 invalid configuration,
// 2 numerical failure.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ncmimo/harness.hpp"

namespace {

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"noncoherent massive-MIMO ML detection harness"};

  ncmimo::ExperimentConfig cfg;
  std::string nr_csv = "128";
  std::string snr_csv = "-10";
  std::string detector = "both";
  std::string window = "bt";
  std::string dump_path;
  bool bench = false;
  bool divergence = false;
  bool no_timings = false;

  app.add_option("--preset", cfg.alphabet,
                 "codeword alphabet: orthogonal-pair | grassmannian | file path")
      ->capture_default_str();
  app.add_option("--profile", cfg.profile,
                 "fading profile: triangular | flat | file path")
      ->capture_default_str();
  app.add_option("--K", cfg.K, "coherence block length")->capture_default_str();
  app.add_option("--nt", cfg.nt, "transmit antennas")->capture_default_str();
  app.add_option("--M", cfg.M, "alphabet size (grassmannian preset)")
      ->capture_default_str();
  app.add_option("--nr", nr_csv, "receive antenna counts, comma list")
      ->capture_default_str();
  app.add_option("--snr-db", snr_csv, "SNR values in dB, comma list")
      ->capture_default_str();
  app.add_option("--trials", cfg.trials, "Monte Carlo trials per grid point")
      ->capture_default_str();
  app.add_option("--seed", cfg.seed, "base seed")->capture_default_str();
  app.add_option("--detector", detector, "direct | spectral | both")
      ->capture_default_str();
  app.add_option("--window", window, "RSM window: rect | bt")
      ->capture_default_str();
  app.add_option("--out", cfg.out_path, "output CSV path");
  app.add_flag("--bench", bench, "run the complexity benchmark instead of a sweep");
  app.add_flag("--divergence", divergence,
               "write pairwise divergence reports instead of a sweep");
  app.add_option("--dump-csm", dump_path,
                 "write the estimated CSM tensor for inspection and exit");
  app.add_flag("--no-timings", no_timings,
               "zero the timing columns (byte-stable output)");
  app.add_option("--direct-cap", cfg.direct_dimension_cap,
                 "largest K*Nr admitted by the direct detector")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  cfg.nr_list = parse_int_list(nr_csv);
  cfg.snr_db_list = parse_double_list(snr_csv);
  cfg.include_timings = !no_timings;
  if (detector == "direct") cfg.detector = ncmimo::DetectorKind::direct;
  else if (detector == "spectral") cfg.detector = ncmimo::DetectorKind::spectral;
  else if (detector == "both") cfg.detector = ncmimo::DetectorKind::both;
  else throw std::invalid_argument("unknown --detector value: " + detector);
  if (window == "rect") cfg.window = ncmimo::Window::rectangular;
  else if (window == "bt") cfg.window = ncmimo::Window::blackman_tukey;
  else throw std::invalid_argument("unknown --window value: " + window);
  cfg.validate();

  if (!dump_path.empty()) {
    if (cfg.nr_list.empty())
      throw std::invalid_argument("--dump-csm needs one --nr value");
    const int nr = cfg.nr_list.front();
    auto profile = ncmimo::detail::make_profile(cfg, nr);
    auto fading = ncmimo::assemble_fading_covariance(profile, nr);
    auto alphabet = ncmimo::detail::make_alphabet(cfg);
    const double snr_db = cfg.snr_db_list.empty() ? -10.0 : cfg.snr_db_list[0];
    const double s2 = ncmimo::snr_to_noise_power(std::pow(10.0, snr_db / 10.0),
                                                 alphabet, fading);
    std::vector<ncmimo::BlockCovariance> covs;
    for (const auto& cw : alphabet.codewords)
      covs.push_back(ncmimo::build_block_covariance(cw, fading, s2));
    ncmimo::dump_csm(dump_path, covs, cfg.window);
    std::cout << "wrote CSM dump to " << dump_path << "\n";
    return 0;
  }

  if (bench) {
    if (cfg.out_path.empty()) {
      ncmimo::benchmark_complexity(cfg, std::cout);
    } else {
      ncmimo::benchmark_complexity(cfg);
      std::cout << "wrote benchmark to " << cfg.out_path << "\n";
    }
    return 0;
  }

  if (divergence) {
    if (cfg.nr_list.empty())
      throw std::invalid_argument("--divergence needs one --nr value");
    const int nr = cfg.nr_list.front();
    auto profile = ncmimo::detail::make_profile(cfg, nr);
    auto fading = ncmimo::assemble_fading_covariance(profile, nr);
    auto alphabet = ncmimo::detail::make_alphabet(cfg);
    const double snr_db = cfg.snr_db_list.empty() ? -10.0 : cfg.snr_db_list[0];
    const double s2 = ncmimo::snr_to_noise_power(std::pow(10.0, snr_db / 10.0),
                                                 alphabet, fading);
    std::vector<ncmimo::DivergenceReport> reports;
    for (int i = 0; i < alphabet.size(); ++i)
      for (int j = 0; j < alphabet.size(); ++j) {
        if (i == j) continue;
        ncmimo::DivergenceReport r;
        r.i = i;
        r.j = j;
        auto ci = ncmimo::build_block_covariance(alphabet.codewords[i], fading, s2);
        auto cj = ncmimo::build_block_covariance(alphabet.codewords[j], fading, s2);
        r.kld_finite = ncmimo::kld_direct(ci, cj);
        auto csm = [&](const ncmimo::Codeword& cw) {
          return [&, cwp = &cw](double sigma) {
            return ncmimo::csm_analytic(*cwp, profile, fading.eta, s2, sigma);
          };
        };
        r.kld_spectral = ncmimo::kld_spectral(csm(alphabet.codewords[i]),
                                              csm(alphabet.codewords[j]), cfg.K);
        r.high_snr = ncmimo::detect_singularity(alphabet.codewords[i].active_rank,
                                                alphabet.codewords[j].active_rank);
        reports.push_back(std::move(r));
      }
    if (cfg.out_path.empty()) {
      ncmimo::write_reports_csv(std::cout, reports);
    } else {
      std::ofstream os(cfg.out_path);
      if (!os) throw std::runtime_error("cannot open " + cfg.out_path);
      ncmimo::write_reports_csv(os, reports);
      std::cout << "wrote divergence reports to " << cfg.out_path << "\n";
    }
    return 0;
  }

  if (cfg.out_path.empty()) {
    ncmimo::run_sweep(cfg, std::cout);
  } else {
    auto est = ncmimo::run_sweep(cfg);
    std::cout << "wrote sweep to " << cfg.out_path << " ("
              << est.points.size() << " rows)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ncmimo::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
