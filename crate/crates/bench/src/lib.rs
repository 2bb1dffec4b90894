//! Benchmark fixtures: scenario builders shared by the criterion benches.

use qsdn_core::scenario::{
    parse_str, resolve, ModelKind, PoissonSpec, Scenario,
};

const FIG3: &str = include_str!("../../../scenarios/fig3_hierarchical.toml");

/// The four-domain reference network with a single request.
pub fn reference(model: ModelKind) -> Scenario {
    let mut file = parse_str(FIG3).expect("embedded scenario parses");
    file.model = model;
    if model == ModelKind::Distributed {
        file.hierarchy = None;
    }
    resolve(&file).expect("embedded scenario resolves")
}

/// The reference network under a Poisson workload of `rate_per_s` requests
/// between the two fiber-joined domains, over a 60 s horizon.
pub fn loaded(model: ModelKind, rate_per_s: f64) -> Scenario {
    let mut file = parse_str(FIG3).expect("embedded scenario parses");
    file.model = model;
    if model == ModelKind::Distributed {
        file.hierarchy = None;
    }
    file.workload.requests.clear();
    file.workload.poisson = Some(PoissonSpec {
        rate_per_s,
        bits: 128,
        pairs: vec![[[1, 1], [2, 1]], [[1, 2], [2, 2]], [[2, 1], [1, 3]]],
    });
    resolve(&file).expect("embedded scenario resolves")
}
