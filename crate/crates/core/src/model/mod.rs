//! Rows, schemas, genome order and the ordered stream contract.

mod config;
mod genome;
mod row;
mod schema;
mod stream;

pub use config::{load_build, load_config, Config, EngineSettings, DEFAULT_CACHE_DIR};
pub use genome::{
    compare_rows, ContigOrder, GenomicPosition, GenomicRange, Locus, LocusSpan, SharedOrder,
};
pub use row::{Row, RowBuilder};
pub use schema::{Column, ColumnKind, Schema};
pub use stream::{
    collect_rows, empty_stream, BoxStream, ConcatStream, DeferredStream, LocusClamp, MergeStream,
    OrderChecked, RowStream, Table, TableStream, VecStream,
};
