#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace towerlimits::cli {

// Exit codes: 0 success, 1 numerical or precondition failure (including failed acceptance
// rules), 2 usage or parse failure.
enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2 };

struct Common {
    std::filesystem::path out_dir = ".";
    int threads = 1;
    std::optional<std::uint64_t> seed;
    bool plot = false;
};

struct AlgebraArgs {
    std::string action;  // invert, norm, envelope
    std::filesystem::path input;
    std::string side;    // empty: the side stored in the file
    long n_out = 200;
    double gamma = 1.5, d = 1.0, t = 0.3;
    long n_max = 10000;
};
int cmd_algebra(const AlgebraArgs& a, const Common& c);

struct TowerArgs {
    std::filesystem::path tower;
    std::string observable;
};
int cmd_tower(const TowerArgs& a, const Common& c);

struct RenewalArgs {
    std::filesystem::path tower;  // decomposition identity
    std::filesystem::path spec;   // renewal rate
    std::string observable;
    int n = 30;
    double t = 0.0;
    long n_out = 1000;
};
int cmd_renewal(const RenewalArgs& a, const Common& c);

struct OperatorArgs {
    std::string action;  // scan, eigen
    double alpha = 0.25;
    std::string observable = "logderiv";
    bool center = false;
    std::string t_grid = "0.1:3:60";
    int cells = 1024;
    int z_points = 32;
};
int cmd_operator(const OperatorArgs& a, const Common& c);

struct VerifyArgs {
    std::filesystem::path config;
};
int cmd_verify(const VerifyArgs& a, const Common& c);

}  // namespace towerlimits::cli
