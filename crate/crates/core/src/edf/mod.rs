//! EDF+ ingestion for the executed left/right fist motor-movement records.

mod annotations;
mod header;
mod record;
mod subset;
pub mod writer;

pub use annotations::{decode_events, encode_tal, parse_tals, Annotation, MovementEvent, Side};
pub use header::{RecordHeader, SignalHeader, StartDateTime, ANNOTATION_LABEL};
pub use record::{normalize_label, parse_record, Channel, RawRecord};
pub use subset::{
    parse_runs, parse_subjects, resolve_subset, RecordId, SubsetSpec, Task, EXECUTED_FIST_RUNS,
    N_SUBJECTS,
};
