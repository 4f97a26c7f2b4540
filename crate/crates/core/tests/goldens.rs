//! Recorded fixtures for the restricted modular operators.

use hamlearn::eeb::MatrixDump;
use hamlearn::linalg::{spectral_norm, CMat};
use hamlearn::model::{HamiltonianModel, ModelFile};
use hamlearn::modular::{build_modular, restricted_ops, GnsSpace};
use hamlearn::oracle::build_gibbs;
use hamlearn::PauliString;
use serde::Deserialize;

#[derive(Deserialize)]
struct QjqGolden {
    model: ModelFile,
    perturbers: Vec<String>,
    jbold: MatrixDump,
    qjq: MatrixDump,
    difference: f64,
}

fn max_entry_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

// 𝐉 = 𝐒𝐃^{-1/2} is not the compression of J onto the perturber span.
#[test]
fn restricted_conjugation_is_not_compressed_conjugation() {
    let g: QjqGolden = serde_json::from_str(include_str!("golden/qjq_counterexample.json")).unwrap();
    let model = HamiltonianModel::try_from(g.model).unwrap();
    let state = build_gibbs(&model, model.true_coeffs().unwrap()).unwrap();
    let space = GnsSpace::new(&state).unwrap();
    let triple = build_modular(&space).unwrap();
    let ps: Vec<PauliString> = g.perturbers.iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(ps.len(), 2);
    let ops = restricted_ops(&space, &triple, &ps).unwrap();
    let qjq = ops.compress_antilinear(&triple.j);

    assert!(max_entry_diff(&ops.jbold.matrix, &g.jbold.to_matrix()) <= 1e-10);
    assert!(max_entry_diff(&qjq.matrix, &g.qjq.to_matrix()) <= 1e-10);
    let diff = spectral_norm(&(&qjq.matrix - &ops.jbold.matrix));
    assert!((diff - g.difference).abs() <= 1e-10);
    assert!(diff > 0.1);

    // 𝐉 is an involution, the compression is not
    let id = CMat::identity(2, 2);
    assert!(spectral_norm(&(ops.jbold.compose(&ops.jbold) - &id)) <= 1e-10);
    assert!(spectral_norm(&(qjq.compose(&qjq) - &id)) > 1e-2);
}
