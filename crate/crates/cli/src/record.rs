//! The persisted run record: one pretty-printed JSON file per run with a
//! schema version. Loading re-validates the tree invariants; save→load→save
//! is byte-identical.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use mechanic_core::pipeline::{tree_metrics, NodeStatus, NodeTranscript, ProofTree, TreeMetrics};

use crate::config::ConfigSnapshot;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    /// Stem of the problem file.
    pub problem_id: String,
    /// Natural-language problem text.
    pub problem: String,
    /// Formal statement text.
    pub statement: String,
    pub config: ConfigSnapshot,
    pub tree: ProofTree,
    pub transcripts: Vec<NodeTranscript>,
    pub metrics: TreeMetrics,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub outcome: NodeStatus,
    /// The assembled sorry-free proof when the outcome is proven.
    pub final_document: Option<String>,
}

impl RunRecord {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).context("serialize run record")?;
        text.push('\n');
        std::fs::write(path, text)
            .with_context(|| format!("cannot write record {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunRecord> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read record {}", path.display()))?;
        let record: RunRecord = serde_json::from_str(&text)
            .with_context(|| format!("record {} is not valid JSON", path.display()))?;
        // Loaded records may aggregate several trees of one problem into a
        // forest; structural invariants still must hold.
        record
            .tree
            .validate_forest()
            .map_err(|e| anyhow::anyhow!("corrupt record: {e}"))?;
        Ok(record)
    }

    /// Aggregates recomputed from the raw record contents.
    pub fn recompute_metrics(&self) -> TreeMetrics {
        tree_metrics(&self.tree, self.final_document.as_deref())
    }

    /// Total cost recomputed from the transcripts.
    pub fn transcript_cost_usd(&self) -> f64 {
        self.transcripts
            .iter()
            .flat_map(|t| &t.entries)
            .map(|e| e.cost_usd)
            .sum()
    }

    pub fn elapsed_minutes(&self) -> f64 {
        self.finished_unix_ms.saturating_sub(self.started_unix_ms) as f64 / 60_000.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ChatMode, GatewayMode};
    use mechanic_core::pipeline::{ProofTree, RunConfig};
    use mechanic_core::roles::{Role, RoleConfig};

    fn sample_record() -> RunRecord {
        let (mut tree, root) = ProofTree::new("theorem t : True := by".into());
        tree.add_child(root, "lemma t_0 : True := by".into());
        let metrics = tree_metrics(&tree, None);
        RunRecord {
            schema_version: SCHEMA_VERSION,
            problem_id: "sample".into(),
            problem: "prove truth".into(),
            statement: "theorem t : True := by sorry".into(),
            config: ConfigSnapshot {
                run: RunConfig::default(),
                budget_usd: Some(100.0),
                time_limit_min: Some(60.0),
                gateway_mode: GatewayMode::Toy,
                chat_mode: ChatMode::Scripted,
                roles: vec![
                    RoleConfig::default_for(Role::Reasoner),
                    RoleConfig::default_for(Role::Verifier),
                    RoleConfig::default_for(Role::Prover),
                ],
            },
            tree,
            transcripts: Vec::new(),
            metrics,
            started_unix_ms: 1_000,
            finished_unix_ms: 61_000,
            outcome: NodeStatus::Unprovable,
            final_document: None,
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("run.json");
        let second = dir.path().join("run2.json");
        let record = sample_record();
        record.save(&first).unwrap();
        let loaded = RunRecord::load(&first).unwrap();
        loaded.save(&second).unwrap();
        assert_eq!(
            std::fs::read(&first).unwrap(),
            std::fs::read(&second).unwrap()
        );
    }

    #[test]
    fn load_rejects_corrupt_tree() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let record = sample_record();
        let mut json: serde_json::Value = serde_json::to_value(&record).unwrap();
        json["tree"]["nodes"][1]["depth"] = serde_json::json!(7);
        std::fs::write(&path, serde_json::to_string_pretty(&json).unwrap()).unwrap();
        let err = RunRecord::load(&path).unwrap_err();
        assert!(err.to_string().contains("corrupt record"));
        assert!(err.to_string().contains("depth"));
    }

    #[test]
    fn elapsed_and_cost_recompute() {
        let record = sample_record();
        assert_eq!(record.elapsed_minutes(), 1.0);
        assert_eq!(record.transcript_cost_usd(), 0.0);
        assert_eq!(record.recompute_metrics(), record.metrics);
    }
}
