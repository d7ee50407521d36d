//! Line-oriented dataset manifests.
//!
//! One tab-separated record per patch: source, y, x, augment code, noise-spec
//! encoding, realization seed. Header lines start with `#` and carry the
//! key=value pairs needed to regenerate the dataset bit-exactly.

use std::io::{BufRead, Write};

use crate::data::augment::AugmentOp;
use crate::error::{Error, Result};
use crate::noise::NoiseSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Spatial,
    Temporal,
}

impl DatasetKind {
    fn as_str(&self) -> &'static str {
        match self {
            DatasetKind::Spatial => "spatial",
            DatasetKind::Temporal => "temporal",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestHeader {
    pub kind: DatasetKind,
    pub patch_size: usize,
    pub seed: u64,
    /// CRC32 of the spatial weight file a temporal dataset was built with;
    /// regeneration validates against it.
    pub spatial_weights_crc: Option<u32>,
}

/// One patch record. For temporal datasets the source is `path#start`, the
/// zero-based index of the first frame of the 3-frame sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub source: String,
    pub y: u32,
    pub x: u32,
    pub augment: AugmentOp,
    pub noise: NoiseSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# videnn-dataset kind={}", self.header.kind.as_str())?;
        writeln!(w, "# patch_size={}", self.header.patch_size)?;
        writeln!(w, "# seed={}", self.header.seed)?;
        if let Some(crc) = self.header.spatial_weights_crc {
            writeln!(w, "# spatial_weights_crc={crc}")?;
        }
        for r in &self.records {
            if r.source.contains('\t') || r.source.contains('\n') {
                return Err(Error::InvalidParam(format!(
                    "source path {:?} contains separator characters",
                    r.source
                )));
            }
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.source,
                r.y,
                r.x,
                r.augment.code(),
                r.noise.encode_kind(),
                r.noise.seed
            )?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut kind = None;
        let mut patch_size = None;
        let mut seed = None;
        let mut spatial_weights_crc = None;
        let mut records = Vec::new();

        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let fail = |msg: &str| Error::Manifest {
                line: lineno,
                msg: msg.to_string(),
            };
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("videnn-dataset kind=") {
                    kind = Some(match v {
                        "spatial" => DatasetKind::Spatial,
                        "temporal" => DatasetKind::Temporal,
                        other => return Err(fail(&format!("unknown kind '{other}'"))),
                    });
                } else if let Some(v) = rest.strip_prefix("patch_size=") {
                    patch_size = Some(v.parse().map_err(|_| fail("bad patch_size"))?);
                } else if let Some(v) = rest.strip_prefix("seed=") {
                    seed = Some(v.parse().map_err(|_| fail("bad seed"))?);
                } else if let Some(v) = rest.strip_prefix("spatial_weights_crc=") {
                    spatial_weights_crc =
                        Some(v.parse().map_err(|_| fail("bad spatial_weights_crc"))?);
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 6 {
                return Err(fail(&format!("expected 6 fields, got {}", fields.len())));
            }
            let y: u32 = fields[1].parse().map_err(|_| fail("bad y"))?;
            let x: u32 = fields[2].parse().map_err(|_| fail("bad x"))?;
            let aug_code: u8 = fields[3].parse().map_err(|_| fail("bad augment code"))?;
            let noise_seed: u64 = fields[5].parse().map_err(|_| fail("bad seed"))?;
            records.push(ManifestRecord {
                source: fields[0].to_string(),
                y,
                x,
                augment: AugmentOp::from_code(aug_code).map_err(|e| fail(&e.to_string()))?,
                noise: NoiseSpec::decode_kind(fields[4], noise_seed)
                    .map_err(|e| fail(&e.to_string()))?,
            });
        }

        Ok(Self {
            header: ManifestHeader {
                kind: kind.ok_or(Error::Manifest {
                    line: 0,
                    msg: "missing kind header".into(),
                })?,
                patch_size: patch_size.ok_or(Error::Manifest {
                    line: 0,
                    msg: "missing patch_size header".into(),
                })?,
                seed: seed.ok_or(Error::Manifest {
                    line: 0,
                    msg: "missing seed header".into(),
                })?,
                spatial_weights_crc,
            },
            records,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DatasetManifest {
        DatasetManifest {
            header: ManifestHeader {
                kind: DatasetKind::Spatial,
                patch_size: 50,
                seed: 42,
                spatial_weights_crc: None,
            },
            records: vec![
                ManifestRecord {
                    source: "images/cat.png".into(),
                    y: 10,
                    x: 20,
                    augment: AugmentOp::from_code(3).unwrap(),
                    noise: NoiseSpec::awgn(25.5, 777).unwrap(),
                },
                ManifestRecord {
                    source: "images/dog.png".into(),
                    y: 0,
                    x: 0,
                    augment: AugmentOp::IDENTITY,
                    noise: NoiseSpec::sensor(12.5, 3.25, 778).unwrap(),
                },
            ],
        }
    }

    #[test]
    fn manifest_round_trips_exactly() {
        let m = sample();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let back = DatasetManifest::read(&buf[..]).unwrap();
        assert_eq!(back, m);
        // Writing again yields the same bytes.
        let mut buf2 = Vec::new();
        back.write(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "# videnn-dataset kind=spatial\n# patch_size=50\n# seed=1\nbad\tline\n";
        match DatasetManifest::read(text.as_bytes()) {
            Err(Error::Manifest { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected manifest error, got {other:?}"),
        }
    }

    #[test]
    fn missing_header_is_rejected() {
        let text = "a.png\t0\t0\t0\tawgn:sigma=1\t5\n";
        assert!(DatasetManifest::read(text.as_bytes()).is_err());
    }
}
