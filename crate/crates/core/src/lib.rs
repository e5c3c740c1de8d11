//! External linear associative memory for long-context recall.
//!
//! A context is split into sentences; each distinct sentence is encoded and
//! written to its own row of a value memory `M`, addressed by a one-hot key
//! computed from the nearest row of a key memory built from sentence prefix
//! encodings. A query is never written: its prefix picks a row, and that single
//! readout is decoded.
//!
//! - [`codec`]: deterministic invertible text <-> vector codec
//! - [`keys`]: key memory and nearest-neighbor one-hot keys
//! - [`memory`]: least-squares write, readout, host/device placement
//! - [`pipeline`]: one write-then-read episode
//! - [`bench`]: passkey / needle trials, metrics, grids, reports

pub mod bench;
pub mod codec;
mod error;
pub mod keys;
mod linefmt;
pub mod memory;
pub mod pipeline;

pub use codec::{prefix_of, Codec, CodecConfig, LatentCodec, LatentVector};
pub use error::{Error, Result};
pub use keys::{build_key_memory, derive_key, nearest_slot, one_hot_key, KeyMemory, KeyMode, KeyVector};
pub use memory::{
    oracle_lstsq, place, read, read_dense, write, write_onehot_fast, MemoryMatrix, RowMatrix,
    Tier, TransferLedger, WriteBatch, WriteKeys,
};
pub use pipeline::{recall_ordering_check, run_episode, segment_context, Episode, RecallResult};
