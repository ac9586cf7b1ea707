//! Named lookup tables applied as unary operators.
//!
//! A table must be a permutation of the κ-bit domain (bijectivity is what
//! lets the analyses treat an application as invertible), checked at
//! registration time.

use crate::width::Width;
use std::collections::BTreeMap;
use std::path::Path;

/// Index into a [`TableRegistry`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TableId(pub u32);

#[derive(Debug, Clone)]
struct TableEntry {
    name: String,
    values: Vec<u16>,
    /// Path as written in the source program, for round-trip printing.
    source: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct TableRegistry {
    entries: Vec<TableEntry>,
    by_name: BTreeMap<String, TableId>,
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("table `{name}` has {got} entries, width {width} needs {want}")]
    WrongLength {
        name: String,
        got: usize,
        want: usize,
        width: Width,
    },
    #[error("table `{name}` entry {value:#x} exceeds width {width}")]
    ValueOutOfRange {
        name: String,
        value: u16,
        width: Width,
    },
    #[error("table `{name}` is not a permutation: value {value:#x} repeats")]
    NotBijective { name: String, value: u16 },
    #[error("table `{0}` registered twice")]
    Duplicate(String),
    #[error("table file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("table file {path} line {line}: `{text}` is not a hex byte")]
    BadHex {
        path: String,
        line: usize,
        text: String,
    },
    #[error("the built-in Sbox table requires width 8, got {0}")]
    SboxWidth(Width),
}

/// The AES S-box: the standard bijective 8-bit substitution, shipped so
/// width-8 programs can say `#table Sbox;` without an external file.
pub const AES_SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab,
    0x76, 0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4,
    0x72, 0xc0, 0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71,
    0xd8, 0x31, 0x15, 0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2,
    0xeb, 0x27, 0xb2, 0x75, 0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6,
    0xb3, 0x29, 0xe3, 0x2f, 0x84, 0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb,
    0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf, 0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45,
    0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8, 0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5,
    0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2, 0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44,
    0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73, 0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a,
    0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb, 0xe0, 0x32, 0x3a, 0x0a, 0x49,
    0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79, 0xe7, 0xc8, 0x37, 0x6d,
    0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08, 0xba, 0x78, 0x25,
    0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a, 0x70, 0x3e,
    0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e, 0xe1,
    0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb,
    0x16,
];

impl TableRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a table after validating length, range, and bijectivity.
    pub fn register(
        &mut self,
        name: &str,
        values: Vec<u16>,
        width: Width,
    ) -> Result<TableId, TableError> {
        if self.by_name.contains_key(name) {
            return Err(TableError::Duplicate(name.to_string()));
        }
        let want = width.domain_size() as usize;
        if values.len() != want {
            return Err(TableError::WrongLength {
                name: name.to_string(),
                got: values.len(),
                want,
                width,
            });
        }
        let mut seen = vec![false; want];
        for &v in &values {
            if v > width.mask() {
                return Err(TableError::ValueOutOfRange {
                    name: name.to_string(),
                    value: v,
                    width,
                });
            }
            if seen[v as usize] {
                return Err(TableError::NotBijective {
                    name: name.to_string(),
                    value: v,
                });
            }
            seen[v as usize] = true;
        }
        let id = TableId(self.entries.len() as u32);
        self.entries.push(TableEntry {
            name: name.to_string(),
            values,
            source: None,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn set_source(&mut self, id: TableId, source: &str) {
        self.entries[id.0 as usize].source = Some(source.to_string());
    }

    pub fn source(&self, id: TableId) -> Option<&str> {
        self.entries[id.0 as usize].source.as_deref()
    }

    /// Register the built-in AES S-box under `name` (width 8 only).
    pub fn register_aes_sbox(&mut self, name: &str, width: Width) -> Result<TableId, TableError> {
        if width != Width::W8 {
            return Err(TableError::SboxWidth(width));
        }
        self.register(name, AES_SBOX.iter().map(|&b| b as u16).collect(), width)
    }

    /// Load a table from a file holding one hex byte per line
    /// (blank lines and `#` comment lines ignored).
    pub fn register_from_file(
        &mut self,
        name: &str,
        path: &Path,
        width: Width,
    ) -> Result<TableId, TableError> {
        let text = std::fs::read_to_string(path).map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v = u16::from_str_radix(line.trim_start_matches("0x"), 16).map_err(|_| {
                TableError::BadHex {
                    path: path.display().to_string(),
                    line: i + 1,
                    text: line.to_string(),
                }
            })?;
            values.push(v);
        }
        self.register(name, values, width)
    }

    pub fn lookup(&self, name: &str) -> Option<TableId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: TableId) -> &str {
        &self.entries[id.0 as usize].name
    }

    pub fn values(&self, id: TableId) -> &[u16] {
        &self.entries[id.0 as usize].values
    }

    #[inline]
    pub fn apply(&self, id: TableId, v: u16) -> u16 {
        self.entries[id.0 as usize].values[v as usize]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aes_sbox_is_bijective_and_known_values() {
        let mut reg = TableRegistry::new();
        let id = reg.register_aes_sbox("Sbox", Width::W8).unwrap();
        assert_eq!(reg.apply(id, 0x00), 0x63);
        assert_eq!(reg.apply(id, 0x53), 0xED);
        assert_eq!(reg.apply(id, 0xFF), 0x16);
    }

    #[test]
    fn rejects_non_permutation() {
        let mut reg = TableRegistry::new();
        let err = reg.register("bad", vec![0, 0, 1, 2], Width::W2).unwrap_err();
        assert!(matches!(err, TableError::NotBijective { .. }));
        let err = reg.register("short", vec![0, 1], Width::W2).unwrap_err();
        assert!(matches!(err, TableError::WrongLength { .. }));
    }

    #[test]
    fn sbox_needs_width_8() {
        let mut reg = TableRegistry::new();
        assert!(matches!(
            reg.register_aes_sbox("Sbox", Width::W4),
            Err(TableError::SboxWidth(_))
        ));
    }
}
