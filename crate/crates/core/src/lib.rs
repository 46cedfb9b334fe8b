//! Globally optimal trilateration.
//!
//! The weighted squared-distance cost
//! `h(x) = 1/4 Σ_ij w_ij (‖x−s_i‖² − d_i²)(‖x−s_j‖² − d_j²)`
//! is minimized by reducing its first-order conditions to an eigenvalue
//! problem of order `2n+1`. The largest real eigenvalue identifies the global
//! minimizer; rank deficiency of the shifted diagonal system reveals
//! degenerate sender geometry (mirrored pairs, hyperspheres).
//!
//! ```
//! use eigentrilat::{solve, Minimizers, SolverOptions, TrilaterationProblem, WeightMatrix};
//!
//! let p = TrilaterationProblem::new(
//!     2,
//!     vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0]],
//!     vec![1.0, 1.0, 1.0],
//!     WeightMatrix::unit(3),
//! )
//! .validate()
//! .unwrap();
//! let sol = solve(&p, &SolverOptions::default()).unwrap();
//! match sol.minimizers {
//!     Minimizers::Unique(x) => assert!(x.iter().all(|v| v.abs() < 1e-9)),
//!     other => panic!("unexpected {other:?}"),
//! }
//! ```

pub mod baselines;
pub mod bench;
pub mod error;
pub mod ingest;
pub mod io;
pub mod problem;
pub mod smalleig;
pub mod solver;
pub mod weights;

pub use baselines::{refine_ml, solve_linear, MlFit, MlOptions};
pub use error::{Error, Result};
pub use problem::{
    clamp_distances, clamp_distances_with, validate_problem, Minimizers, Point, SolutionSet,
    Sphere, TrilaterationProblem, WeightMatrix, DEFAULT_CLAMP,
};
pub use solver::{
    build_m, build_ma, build_md, build_normal_data, cost_h, gradient_h,
    reduce_known_coordinates, solve, solve_simple, solve_with_known, spectral_data,
    stationary_points, NormalData, SolverOptions, SpectralData, StationaryPoint, StationarySet,
};
pub use weights::NoiseModel;
