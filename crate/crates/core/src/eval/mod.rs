//! Desk-scale metrics, CSV reports and scatter renderings.

mod metrics;
mod render;
mod report;

pub use metrics::{
    mse, psnr, target_alignment, Alignment, AlignmentSurrogate, ALIGNMENT_DRAWS, ALIGNMENT_SEED,
};
pub use render::{render_scatter, Pixmap, Viewport};
pub use report::{emit_csv, parse_csv, write_csv, MetricsRow, CSV_HEADER};
