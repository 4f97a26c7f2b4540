//! Semidefinite programs for certified coefficient intervals and the
//! minimal confidence parameter.

pub mod algorithms;
pub mod lmi;
pub mod solver;

pub use algorithms::{
    algorithm_a, algorithm_a_with, algorithm_b, build_constraints, certify, coefficient_intervals, AlgorithmBResult,
    Certification, DirectionResult, DirectionStatus, LearnOptions, LearnReport,
};
pub use lmi::{Certificate, CertificateCheck, HermitianAffine, LmiProblem, Sense};
pub use solver::{solve_lmi, LmiSolution, Prepared, SolveStats, SolveStatus, SolverOptions};

/// Serde adapters storing complex matrices as row-major `[re, im]` pairs.
pub(crate) mod cmat_serde {
    pub mod vec {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        use crate::eeb::MatrixDump;
        use crate::linalg::CMat;

        pub fn serialize<S: Serializer>(v: &[CMat], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(MatrixDump::from).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
            let dumps = Vec::<MatrixDump>::deserialize(d)?;
            for m in &dumps {
                if m.data.len() != m.rows * m.cols {
                    return Err(serde::de::Error::custom("matrix data length does not match its shape"));
                }
            }
            Ok(dumps.iter().map(MatrixDump::to_matrix).collect())
        }
    }
}
