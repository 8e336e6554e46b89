//! Discrete and continuous Robin heat kernels.

pub mod audit;
pub mod continuous;
pub mod free;
pub mod halfline;
pub mod interval;
pub mod spectrum;

pub use audit::{kernel_bound_audit, AuditEntry, KernelAuditReport};
pub use continuous::{continuous_halfline_kernel, erfcx, gaussian};
pub use free::{free_kernel_row, free_walk_kernel};
pub use halfline::{halfline_robin_kernel, HalfLineKernel};
pub use interval::{interval_kernel_image, interval_kernel_spectral, ImageExpansion, KernelMatrix};
pub use spectrum::{robin_laplacian, solve_interval_spectrum, SpectralData};
