//! Manifest + binary model container shared by every model kind.
//!
//! ```text
//! toonface-model
//! version 1
//! kind hcnn
//! config <key> <value>
//! tensor <name> <d0,d1,..> <offset> <len>
//! checksum <sha256 of payload, hex>
//! end
//! <payload: little-endian f64 values, tensors in manifest order>
//! ```

use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "toonface-model";
const END: &str = "\nend\n";

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: String,
    pub config: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn new(kind: impl Into<String>) -> Self {
        Container { kind: kind.into(), config: Vec::new(), tensors: Vec::new() }
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format(format!("expected a `{kind}` model, found `{}`", self.kind)));
        }
        Ok(())
    }

    pub fn config_value(&self, key: &str) -> Result<&str> {
        self.config
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Format(format!("missing config key `{key}`")))
    }

    pub fn parse_config<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.config_value(key)?;
        raw.parse().map_err(|_| Error::Format(format!("config `{key}` has unparsable value `{raw}`")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        let mut manifest = format!("{MAGIC}\nversion {FORMAT_VERSION}\nkind {}\n", self.kind);
        let mut offset = 0;
        for (k, v) in &self.config {
            manifest.push_str(&format!("config {k} {v}\n"));
        }
        for (name, t) in &self.tensors {
            let dims = t.shape().iter().map(usize::to_string).collect::<Vec<_>>().join(",");
            manifest.push_str(&format!("tensor {name} {dims} {offset} {}\n", t.len()));
            for v in t.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            offset += t.len();
        }
        manifest.push_str(&format!("checksum {}", hex::encode(Sha256::digest(&payload))));
        manifest.push_str(END);
        let mut out = manifest.into_bytes();
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let end = find(bytes, END.as_bytes()).ok_or_else(|| Error::Format("manifest terminator not found".into()))?;
        let manifest = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Format("manifest is not UTF-8".into()))?;
        let payload = &bytes[end + END.len()..];
        let mut lines = manifest.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::Format("not a toonface model file".into()));
        }
        let version: u32 = lines
            .next()
            .and_then(|l| l.strip_prefix("version "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format("missing version line".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Version { found: version, expected: FORMAT_VERSION });
        }
        let kind = lines
            .next()
            .and_then(|l| l.strip_prefix("kind "))
            .ok_or_else(|| Error::Format("missing kind line".into()))?
            .to_string();

        let mut config = Vec::new();
        let mut entries = Vec::new();
        let mut checksum = None;
        for line in lines {
            let (tag, rest) =
                line.split_once(' ').ok_or_else(|| Error::Format(format!("bad manifest line `{line}`")))?;
            match tag {
                "config" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    config.push((k.to_string(), v.to_string()));
                }
                "tensor" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 4 {
                        return Err(Error::Format(format!("bad tensor line `{line}`")));
                    }
                    let dims = f[1]
                        .split(',')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| Error::Format(format!("bad shape in `{line}`")))?;
                    let offset: usize = f[2].parse().map_err(|_| Error::Format(format!("bad offset in `{line}`")))?;
                    let len: usize = f[3].parse().map_err(|_| Error::Format(format!("bad length in `{line}`")))?;
                    entries.push((f[0].to_string(), dims, offset, len));
                }
                "checksum" => checksum = Some(rest.to_string()),
                _ => return Err(Error::Format(format!("unknown manifest tag `{tag}`"))),
            }
        }
        let checksum = checksum.ok_or_else(|| Error::Format("missing checksum".into()))?;
        if hex::encode(Sha256::digest(payload)) != checksum {
            return Err(Error::Checksum);
        }
        let values: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let mut tensors = Vec::with_capacity(entries.len());
        for (name, dims, offset, len) in entries {
            let slice = values
                .get(offset..offset + len)
                .ok_or_else(|| Error::Format(format!("tensor `{name}` runs past the payload")))?;
            tensors.push((name, Tensor::new(&dims, slice.to_vec())?));
        }
        Ok(Container { kind, config, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Peeks at the `kind` line without verifying the payload.
    pub fn peek_kind(path: impl AsRef<Path>) -> Result<String> {
        let bytes = std::fs::read(path)?;
        let head = String::from_utf8_lossy(&bytes[..bytes.len().min(256)]).to_string();
        head.lines()
            .find_map(|l| l.strip_prefix("kind ").map(str::to_string))
            .ok_or_else(|| Error::Format("missing kind line".into()))
    }
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}
