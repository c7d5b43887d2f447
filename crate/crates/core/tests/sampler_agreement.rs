use std::collections::BTreeMap;

use maxlin::context::{analyze, Context};
use maxlin::dist::InnovationDist;
use maxlin::impact::DEFAULT_GUARD;
use maxlin::network::WeightedDag;
use maxlin::oracle::{band_kolmogorov, rejection_band_sampler, RejectionBudget};
use maxlin::rat::{int, Rat};
use maxlin::representation::{build_representation, conditional_sampler};
use maxlin::zoo::{self, node};

const EPS: f64 = 0.01;
const N: usize = 10_000;

fn worst_marginal_gap(model: &WeightedDag, observed: &[(usize, Rat)], dist: InnovationDist) -> f64 {
    let obs: BTreeMap<usize, Rat> = observed.iter().map(|(l, v)| (node(*l), v.clone())).collect();
    let ctx = Context::new(model, obs.clone()).unwrap();
    let analysis = analyze(model, &ctx, DEFAULT_GUARD).unwrap();
    let rep = build_representation(model, &analysis);
    let exact = conditional_sampler(&rep, dist, N, 5).unwrap();
    let band = rejection_band_sampler(model, &obs, EPS, N, dist, 6, RejectionBudget::default()).unwrap();
    (0..model.n())
        .filter(|v| !obs.contains_key(v))
        .map(|v| {
            let a: Vec<f64> = exact.iter().map(|s| s.x[v]).collect();
            band_kolmogorov(&a, &band.column(v), 2.0 * EPS)
        })
        .fold(0.0, f64::max)
}

#[test]
fn tent_marginals_agree() {
    let d = worst_marginal_gap(&zoo::tent(), &[(4, int(2)), (5, int(2))], InnovationDist::Frechet);
    assert!(d <= 0.03, "{d}");
}

#[test]
fn umbrella_marginals_agree() {
    let d = worst_marginal_gap(&zoo::umbrella(), &[(6, int(3)), (7, int(3))], InnovationDist::Frechet);
    assert!(d <= 0.03, "{d}");
}

#[test]
fn half_butterfly_marginals_agree() {
    // at x4 = x5 = 1 the band is hit about once per million draws
    let d = worst_marginal_gap(&zoo::half_butterfly(), &[(4, int(6)), (5, int(6))], InnovationDist::Frechet);
    assert!(d <= 0.03, "{d}");
}

#[test]
fn other_laws_agree_on_tent() {
    for dist in [
        InnovationDist::LogNormal { mu: 0.0, sigma: 1.0 },
        InnovationDist::Pareto { alpha: 2.0 },
    ] {
        let d = worst_marginal_gap(&zoo::tent(), &[(4, int(2)), (5, int(2))], dist);
        assert!(d <= 0.03, "{dist:?} {d}");
    }
}

#[test]
fn cassiopeia_marginals_agree() {
    let d = worst_marginal_gap(&zoo::cassiopeia(), &[(4, int(3)), (5, int(2))], InnovationDist::Frechet);
    assert!(d <= 0.03, "{d}");
}
