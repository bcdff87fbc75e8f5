//! Sample persistence, fixed evaluation sets and evaluation breakdowns.

mod breakdown;
mod fixed;
mod plots;
mod record;

pub use breakdown::{complexity_breakdown, per_term_breakdown, verdict_value, BreakdownRow, BreakdownTable};
pub use fixed::{generate_fixed_set, load_fixed_set, replay_records, write_fixed_set, FixedSetManifest};
pub use plots::{concatenated_losses, export_plot_data, loss_spikes, LossPoint, PlotExport, PLOTS_DIR};
pub use record::{append_jsonl, file_digest, read_jsonl, records_digest, write_jsonl, CameraRecord, SampleRecord};
