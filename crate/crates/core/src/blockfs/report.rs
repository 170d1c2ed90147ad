//! `dfsadmin -report` data and its text rendering.

use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use crate::clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeStatus {
    Normal,
    Dead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataNodeReport {
    pub name: String,
    pub status: NodeStatus,
    pub configured_capacity: u64,
    pub dfs_used: u64,
    pub non_dfs_used: u64,
    pub dfs_remaining: u64,
    pub dfs_used_pct: f64,
    pub dfs_remaining_pct: f64,
    pub last_contact: i64,
    pub blocks: usize,
}

/// Capacity figures aggregate the live datanodes only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub configured_capacity: u64,
    pub present_capacity: u64,
    pub dfs_remaining: u64,
    pub dfs_used: u64,
    pub non_dfs_used: u64,
    pub dfs_used_pct: f64,
    pub dfs_remaining_pct: f64,
    pub under_replicated: u64,
    pub corrupt_replica_blocks: u64,
    pub missing_blocks: u64,
    pub datanodes: Vec<DataNodeReport>,
    pub live: usize,
    pub dead: usize,
}

pub fn percent(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 * 100.0 / whole as f64
    }
}

/// `93.69`, `0`, `12.5`: two decimals with trailing zeros dropped.
pub fn format_pct(pct: f64) -> String {
    let s = format!("{pct:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// `282.03 GB`, `24.01 KB`, binary units.
pub fn format_bytes(n: u64) -> String {
    const UNITS: [(&str, f64); 4] = [
        ("TB", 1_099_511_627_776.0),
        ("GB", 1_073_741_824.0),
        ("MB", 1_048_576.0),
        ("KB", 1024.0),
    ];
    for (unit, size) in UNITS {
        if n as f64 >= size {
            return format!("{} {unit}", format_pct(n as f64 / size));
        }
    }
    format!("{} KB", format_pct(n as f64 / 1024.0))
}

impl fmt::Display for ClusterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let _ = writeln!(s, "Configured Capacity: {} ({})", self.configured_capacity, format_bytes(self.configured_capacity));
        let _ = writeln!(s, "Present Capacity: {} ({})", self.present_capacity, format_bytes(self.present_capacity));
        let _ = writeln!(s, "DFS Remaining: {} ({})", self.dfs_remaining, format_bytes(self.dfs_remaining));
        let _ = writeln!(s, "DFS Used: {} ({})", self.dfs_used, format_bytes(self.dfs_used));
        let _ = writeln!(s, "DFS Used%: {}%", format_pct(self.dfs_used_pct));
        let _ = writeln!(s, "Under replicated blocks: {}", self.under_replicated);
        let _ = writeln!(s, "Blocks with corrupt replicas: {}", self.corrupt_replica_blocks);
        let _ = writeln!(s, "Missing blocks: {}", self.missing_blocks);
        let _ = writeln!(s);
        let _ = writeln!(s, "-------------------------------------------------");
        let _ = writeln!(
            s,
            "Datanodes available: {} ({} total, {} dead)",
            self.live,
            self.live + self.dead,
            self.dead
        );
        for dn in &self.datanodes {
            let _ = writeln!(s);
            let _ = writeln!(s, "Name: {}", dn.name);
            let _ = writeln!(s, "Decommission Status : Normal");
            if dn.status == NodeStatus::Dead {
                let _ = writeln!(s, "State : Dead");
            }
            let _ = writeln!(s, "Configured Capacity: {} ({})", dn.configured_capacity, format_bytes(dn.configured_capacity));
            let _ = writeln!(s, "DFS Used: {} ({})", dn.dfs_used, format_bytes(dn.dfs_used));
            let _ = writeln!(s, "Non DFS Used: {} ({})", dn.non_dfs_used, format_bytes(dn.non_dfs_used));
            let _ = writeln!(s, "DFS Remaining: {} ({})", dn.dfs_remaining, format_bytes(dn.dfs_remaining));
            let _ = writeln!(s, "DFS Used%: {}%", format_pct(dn.dfs_used_pct));
            let _ = writeln!(s, "DFS Remaining%: {}%", format_pct(dn.dfs_remaining_pct));
            let _ = writeln!(s, "Last contact: {}", clock::format_long(dn.last_contact));
        }
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn human_units() {
        assert_eq!(format_bytes(302_827_593_728), "282.03 GB");
        assert_eq!(format_bytes(24_591), "24.01 KB");
        assert_eq!(format_bytes(19_106_844_657), "17.79 GB");
        assert_eq!(format_bytes(283_720_724_480), "264.24 GB");
        assert_eq!(format_bytes(0), "0 KB");
    }

    #[test]
    fn percents() {
        assert_eq!(format_pct(percent(283_720_748_071, 302_827_593_728)), "93.69");
        assert_eq!(format_pct(percent(24_591, 302_827_593_728)), "0");
        assert_eq!(format_pct(12.5), "12.5");
    }
}
