//! Dense reference Hamiltonian shared by the oracle and acceptance targets.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use rbmprune::TfimSpec;

/// Single-site operator on site `site` of `n`, with site i on bit i of the
/// basis index (the last Kronecker factor is site 0).
pub fn embed(op: &DMatrix<f64>, site: usize, n: usize) -> DMatrix<f64> {
    let id = DMatrix::<f64>::identity(2, 2);
    let mut out = DMatrix::<f64>::identity(1, 1);
    for k in (0..n).rev() {
        out = out.kronecker(if k == site { op } else { &id });
    }
    out
}

pub fn pauli_z() -> DMatrix<f64> {
    // Local basis |0⟩ = down, |1⟩ = up.
    DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0])
}

pub fn pauli_x() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn dense_hamiltonian(spec: &TfimSpec) -> DMatrix<f64> {
    let n = spec.n_sites;
    let dim = 1 << n;
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..n - 1 {
        // Both factors are diagonal, so the product is elementwise.
        h -= spec.coupling * embed(&pauli_z(), i, n).component_mul(&embed(&pauli_z(), i + 1, n));
    }
    for i in 0..n {
        h += spec.field * embed(&pauli_x(), i, n);
    }
    h
}

pub fn dense_ground(spec: &TfimSpec) -> (f64, DVector<f64>) {
    let eig = SymmetricEigen::new(dense_hamiltonian(spec));
    let k = eig.eigenvalues.imin();
    (eig.eigenvalues[k], eig.eigenvectors.column(k).into_owned())
}
