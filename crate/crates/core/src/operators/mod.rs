//! Concrete wavefront operators — morphological reconstruction, Euclidean
//! distance transform, fill-holes, grid-metric distance — together with the
//! reference algorithms each one is verified against and the tiled runners.

pub mod chamfer;
pub mod edt;
pub mod fill;
pub mod recon;
pub mod tiled;

pub use chamfer::{
    normalize_dt, oracle_chamfer_brute, oracle_dt_hybrid, oracle_dt_parallel, oracle_dt_queue,
    oracle_dt_sequential, ChamferOp, DtConvention,
};
pub use edt::{edt, edt_parallel, oracle_edt_exact_sq, EdtOp, EdtResult};
pub use fill::{complement, fill_holes};
pub use recon::{
    oracle_recon_parallel, recon_init_scans, reconstruct, reconstruct_parallel, ReconContext,
    ReconOp,
};
pub use tiled::{edt_tiled, fill_holes_tiled, reconstruct_tiled};
