"""Smoke test for the efgen extension: build with
`maturin develop -m crates/python/Cargo.toml` and run this script."""

import math

import efgen


def main():
    gauss = efgen.Family("gaussian_scalar_var", dim=1)
    eta = gauss.to_natural([1.0, 2.0])
    assert abs(gauss.entropy([1.0, 2.0]) - 0.5 * math.log(2 * math.pi * math.e * 2.0)) < 1e-12
    assert abs(gauss.grad_log_partition(eta)[0] - 1.0) < 1e-12

    truth = efgen.Model.ef_mixture(gauss, [0.3, 0.7], [[-4.0, 1.0], [4.0, 0.5]])
    _, data = truth.sample(400, seed=1)
    fit = efgen.em_mixture(truth, data, seed=2)
    report = fit.model.elbo(data)
    assert fit.converged, fit.trace["stop_reason"]
    assert report["relative_gap"] < 1e-6, report
    assert abs(report["elbo"] - fit.model.log_marginal_likelihood(data)) < 1e-9

    assert fit.model.check_criterion(seed=0)["passes"]
    rigid = efgen.Model.rigid_sbn(0.5, 0.0).check_criterion(seed=0)
    assert not rigid["passes"] and rigid["noise_residual"] >= 0.1

    again = efgen.Model.from_json(fit.model.to_json())
    assert again.theta == fit.model.theta

    _, sbn_data = efgen.Model.simple_sbn(0.4, 2.0, -1.5).sample(500, seed=3)
    sbn = efgen.fit_sbn(efgen.Model.simple_sbn(0.5, 0.1, 0.1), sbn_data, seed=4)
    assert sbn.model.elbo(sbn_data)["relative_gap"] < 1e-5

    print("efgen", efgen.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
