//! Run manifests: every output file records the subcommand, argument
//! vector, seed, input digests, and tool version that produced it, so
//! identical invocations are provably identical byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use sha2::{Digest, Sha256};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone)]
pub struct RunManifest {
    subcommand: String,
    args: String,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
}

impl RunManifest {
    /// Captures the current process argv (minus the program name).
    pub fn new(subcommand: &str) -> Self {
        let args: Vec<String> = std::env::args().skip(1).collect();
        Self {
            subcommand: subcommand.to_string(),
            args: args.join(" "),
            seed: None,
            inputs: BTreeMap::new(),
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Records the sha256 of an input file under a role name.
    pub fn input(mut self, role: &str, path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading {} input `{}`", role, path.display()))?;
        let digest = Sha256::digest(&bytes);
        self.inputs.insert(role.to_string(), hex::encode(digest));
        Ok(self)
    }

    /// Flattened `manifest.*` entries for a metadata block.
    pub fn entries(&self) -> BTreeMap<String, String> {
        let mut entries = BTreeMap::new();
        entries.insert(
            "manifest.tool_version".into(),
            env!("CARGO_PKG_VERSION").to_string(),
        );
        entries.insert("manifest.format_version".into(), FORMAT_VERSION.into());
        entries.insert("manifest.subcommand".into(), self.subcommand.clone());
        entries.insert("manifest.args".into(), self.args.clone());
        if let Some(seed) = self.seed {
            entries.insert("manifest.seed".into(), seed.to_string());
        }
        for (role, digest) in &self.inputs {
            entries.insert(format!("manifest.input.{role}"), digest.clone());
        }
        entries
    }

    pub fn apply(&self, metadata: &mut BTreeMap<String, String>) {
        metadata.extend(self.entries());
    }

    /// `# key: value` comment lines for CSV outputs.
    pub fn comment_block(&self) -> String {
        self.entries()
            .iter()
            .map(|(k, v)| format!("# {k}: {v}\n"))
            .collect()
    }
}
