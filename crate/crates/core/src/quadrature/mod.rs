//! Interaction weights `∬_{A×B} |x - y|^{-(n+α)} dx dy` between grid cells,
//! exterior rectangles and the far field.

mod oracle;
mod pair;
mod table;
mod tails;

pub use oracle::subdivision_weight;
pub use pair::{cell_pair_weight, cell_pair_weight_with_method, half_line_weight, interval_weight, PairMethod};
pub use table::{assemble_table, exterior_mesh, KernelTable, EXTERIOR_RATIO_1D, EXTERIOR_RATIO_2D};
pub use tails::{tail_weight, ExteriorRegion, FarMoments, TailData};

/// Default relative quadrature tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;
