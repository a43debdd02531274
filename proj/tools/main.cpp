#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"
#include "towerlimits/errors.hpp"
#include "towerlimits/sampling.hpp"

using namespace towerlimits;
using namespace towerlimits::cli;

int main(int argc, char** argv) {
    CLI::App app{"towerlimits: limit theorems for Young towers and the LSV map"};
    app.require_subcommand(1);
    Common common;
    common.threads = default_threads();
    std::uint64_t seed = 0;
    app.add_option("--out-dir", common.out_dir, "Directory for every output file")->capture_default_str();
    app.add_option("--threads", common.threads, "Worker threads (TOWERLIMITS_THREADS, else all cores)")
        ->check(CLI::PositiveNumber);
    auto* seed_opt = app.add_option("--seed", seed, "Overrides the seed of the config");
    app.add_flag("--plot", common.plot, "Write SVG plots next to the reports");

    AlgebraArgs alg;
    auto* algebra = app.add_subcommand("algebra", "Weighted sequence algebra");
    algebra->add_option("action", alg.action, "invert, norm or envelope")
        ->required()
        ->check(CLI::IsMember({"invert", "norm", "envelope"}));
    algebra->add_option("--input", alg.input, "Sequence file");
    algebra->add_option("--side", alg.side, "causal or two_sided (default: from the file)");
    algebra->add_option("--n-out", alg.n_out, "Output horizon")->capture_default_str();
    algebra->add_option("--gamma", alg.gamma, "Decay exponent")->capture_default_str();
    algebra->add_option("--d", alg.d, "Envelope constant d")->capture_default_str();
    algebra->add_option("--t", alg.t, "Envelope parameter t")->capture_default_str();
    algebra->add_option("--n-max", alg.n_max, "Envelope range")->capture_default_str();

    TowerArgs tw;
    auto* tower = app.add_subcommand("tower", "Finite tower summary and boundary identities");
    tower->add_option("--tower", tw.tower, "Tower file")->required();
    tower->add_option("--obs", tw.observable, "Observable name");

    RenewalArgs rn;
    auto* renewal = app.add_subcommand("renewal", "Renewal decomposition identity or renewal rate");
    renewal->add_option("--tower", rn.tower, "Tower file: check the decomposition identity");
    renewal->add_option("--spec", rn.spec, "Renewal spec: fit the decay of T_n - P/mu");
    renewal->add_option("--obs", rn.observable, "Observable name");
    renewal->add_option("--n", rn.n, "Largest n")->capture_default_str();
    renewal->add_option("--t", rn.t, "Twist parameter")->capture_default_str();
    renewal->add_option("--n-out", rn.n_out, "Horizon for the rate fit")->capture_default_str();

    OperatorArgs op;
    auto* oper = app.add_subcommand("operator", "Induced transfer operator of the LSV map");
    oper->add_option("action", op.action, "scan or eigen")->required()->check(CLI::IsMember({"scan", "eigen"}));
    oper->add_option("--alpha", op.alpha, "LSV parameter in (0, 1/2)")->capture_default_str();
    oper->add_option("--f", op.observable, "Observable: x, logderiv, one, zero, const:<c>, power:<p>")
        ->capture_default_str();
    oper->add_flag("--center", op.center, "Remove the invariant mean first");
    oper->add_option("--t", op.t_grid, "t grid: list, lo:hi:count or pow2:a:b")->capture_default_str();
    oper->add_option("--cells", op.cells, "Ulam cells on the base")->capture_default_str();
    oper->add_option("--z", op.z_points, "Points on the unit circle")->capture_default_str();

    VerifyArgs vf;
    auto* verify = app.add_subcommand("verify", "Run an experiment config and its acceptance rules");
    verify->add_option("--config", vf.config, "Experiment config")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }
    if (*seed_opt) common.seed = seed;

    try {
        if (*algebra) {
            if (alg.action != "envelope" && alg.input.empty()) throw InvalidInput("algebra: --input is required");
            return cmd_algebra(alg, common);
        }
        if (*tower) return cmd_tower(tw, common);
        if (*renewal) return cmd_renewal(rn, common);
        if (*oper) return cmd_operator(op, common);
        if (*verify) return cmd_verify(vf, common);
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kUsage;
    } catch (const InvalidInput& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kUsage;
    } catch (const PreconditionError& e) {
        std::cerr << "refused: " << e.what() << "\n";
        return kFailure;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kUsage;
}
