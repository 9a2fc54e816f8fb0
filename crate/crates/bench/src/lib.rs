//! Shared fixtures for the benchmarks.

use kalmdp::abstraction::{build_two_phase, BuildConfig, HorizonSpec};
use kalmdp::model::benchmarks;
use kalmdp::{BenchmarkSpec, Imdp, Partition};

/// Double integrator on a `cells x cells` grid.
pub fn double_integrator(cells: usize) -> (BenchmarkSpec, Partition) {
    let spec = benchmarks::double_integrator().expect("built-in benchmark");
    let part = Partition::uniform(&spec.system.state_domain, &[cells, cells]).expect("valid grid");
    (spec, part)
}

/// Two-phase abstraction with the default horizon split `N = 16`, `nbar = 3`.
pub fn two_phase(spec: &BenchmarkSpec, part: &Partition) -> Imdp {
    build_two_phase(spec, part, &HorizonSpec::two_phase(spec.horizon, 3), &BuildConfig::default()).expect("abstraction builds")
}
