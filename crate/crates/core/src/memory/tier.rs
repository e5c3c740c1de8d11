use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Width of one stored scalar (f64).
pub const SCALAR_BYTES: u64 = 8;

/// Storage placement of a matrix. Placement is bookkeeping only; data always
/// lives in ordinary host memory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    #[default]
    Host,
    Device,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Host => "host",
            Tier::Device => "device",
        })
    }
}

/// Byte counters for host/device traffic and device residency. Safe to share
/// across threads.
#[derive(Debug, Default)]
pub struct TransferLedger {
    host_to_device: AtomicU64,
    device_to_host: AtomicU64,
    resident: AtomicU64,
    peak: AtomicU64,
}

impl TransferLedger {
    pub fn host_to_device(&self, bytes: u64) {
        self.host_to_device.fetch_add(bytes, Ordering::Relaxed);
    }

    pub fn device_to_host(&self, bytes: u64) {
        self.device_to_host.fetch_add(bytes, Ordering::Relaxed);
    }

    pub fn alloc_device(&self, bytes: u64) {
        let now = self.resident.fetch_add(bytes, Ordering::AcqRel) + bytes;
        self.peak.fetch_max(now, Ordering::AcqRel);
    }

    pub fn free_device(&self, bytes: u64) {
        let prev = self.resident.fetch_sub(bytes, Ordering::AcqRel);
        debug_assert!(prev >= bytes, "freeing more device bytes than allocated");
    }

    pub fn resident_device_bytes(&self) -> u64 {
        self.resident.load(Ordering::Acquire)
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            bytes_host_to_device: self.host_to_device.load(Ordering::Acquire),
            bytes_device_to_host: self.device_to_host.load(Ordering::Acquire),
            peak_device_bytes: self.peak.load(Ordering::Acquire),
        }
    }
}

/// Point-in-time copy of a [`TransferLedger`], as emitted in reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub bytes_host_to_device: u64,
    pub bytes_device_to_host: u64,
    pub peak_device_bytes: u64,
}

impl LedgerSnapshot {
    /// Combines independent trials: transfers add up, the peak is the largest seen.
    pub fn merge(self, other: LedgerSnapshot) -> LedgerSnapshot {
        LedgerSnapshot {
            bytes_host_to_device: self.bytes_host_to_device + other.bytes_host_to_device,
            bytes_device_to_host: self.bytes_device_to_host + other.bytes_device_to_host,
            peak_device_bytes: self.peak_device_bytes.max(other.peak_device_bytes),
        }
    }
}
