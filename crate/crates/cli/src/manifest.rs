//! Run manifests: every emitted report carries the subcommand, its full
//! parameter set, the seed, the tool version, and digests of input files,
//! so identical manifests reproduce byte-identical result bodies.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub params: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
}

impl RunManifest {
    pub fn new(subcommand: &'static str, params: serde_json::Value) -> Self {
        Self {
            tool: "tandemscale",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            params,
            seed: None,
            inputs: Vec::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_input(mut self, path: &Path) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            write!(hex, "{byte:02x}").expect("writing to string");
        }
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex,
        });
        Ok(self)
    }

    /// Wrap a result in the standard JSON envelope.
    pub fn envelope<R: Serialize>(&self, result: &R) -> String {
        #[derive(Serialize)]
        struct Envelope<'a, R> {
            manifest: &'a RunManifest,
            result: &'a R,
        }
        let mut out = serde_json::to_string_pretty(&Envelope {
            manifest: self,
            result,
        })
        .expect("report serializable");
        out.push('\n');
        out
    }

    /// Leading comment line embedding the manifest in CSV output.
    pub fn csv_header(&self) -> String {
        format!(
            "# manifest: {}\n",
            serde_json::to_string(self).expect("manifest serializable")
        )
    }
}
