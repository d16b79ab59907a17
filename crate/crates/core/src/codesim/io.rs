use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, SyndromeRecord};
use crate::error::{Error, Result};

const MAGIC: &str = "synd";
const VERSION: &str = "v1";

/// Text form: header `synd v1 ns=<n_s> t=<t> split=<seed>`, then one
/// `<bits> <label>` line per record with bits in node-major order.
pub fn render_dataset(ds: &Dataset) -> String {
    let width = ds.n_s * ds.t;
    let mut out = String::with_capacity(32 + ds.records.len() * (width + 3));
    let _ = writeln!(out, "{MAGIC} {VERSION} ns={} t={} split={}", ds.n_s, ds.t, ds.split_seed);
    for r in &ds.records {
        out.extend(r.bits.iter().map(|&b| if b == 1 { '1' } else { '0' }));
        out.push(' ');
        out.push(if r.label == 1 { '1' } else { '0' });
        out.push('\n');
    }
    out
}

fn parse_bits(s: &str, width: usize, line: usize) -> Result<Vec<u8>> {
    if s.len() != width {
        return Err(Error::parse(line, format!("expected {width} syndrome characters, got {}", s.len())));
    }
    s.bytes()
        .map(|c| match c {
            b'0' => Ok(0),
            b'1' => Ok(1),
            other => Err(Error::parse(line, format!("non-binary character {:?}", other as char))),
        })
        .collect()
}

fn header_field(token: Option<&str>, key: &str) -> Result<u64> {
    let tok = token.ok_or_else(|| Error::parse(1, format!("missing {key}= field")))?;
    tok.strip_prefix(key)
        .and_then(|v| v.strip_prefix('='))
        .ok_or_else(|| Error::parse(1, format!("expected {key}=<int>, got {tok:?}")))?
        .parse()
        .map_err(|_| Error::parse(1, format!("bad integer in {tok:?}")))
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let mut tok = header.split_whitespace();
    if tok.next() != Some(MAGIC) {
        return Err(Error::parse(1, format!("expected {MAGIC:?} header")));
    }
    match tok.next() {
        Some(VERSION) => {}
        other => return Err(Error::parse(1, format!("unsupported version {other:?}"))),
    }
    let n_s = header_field(tok.next(), "ns")? as usize;
    let t = header_field(tok.next(), "t")? as usize;
    // The split seed is optional for files written by other tools.
    let split_seed = match tok.next() {
        Some(s) => header_field(Some(s), "split")?,
        None => 0,
    };
    if let Some(extra) = tok.next() {
        return Err(Error::parse(1, format!("unexpected header field {extra:?}")));
    }
    if n_s == 0 || t == 0 {
        return Err(Error::parse(1, "ns and t must be positive"));
    }
    let width = n_s * t;
    let mut ds = Dataset::new(n_s, t, split_seed);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let (bits, label) = line
            .split_once(' ')
            .ok_or_else(|| Error::parse(lineno, "expected '<bits> <label>'"))?;
        let bits = parse_bits(bits, width, lineno)?;
        let label = match label {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::parse(lineno, format!("bad label {other:?}"))),
        };
        ds.records.push(SyndromeRecord { bits, label });
    }
    Ok(ds)
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, render_dataset(ds)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

/// `order[d]` is the internal node-major bit index of external detector `d`.
/// The default treats input as round-major: `d → (d mod n_s, d div n_s)`.
fn detector_map(n_s: usize, t: usize, order: Option<&[usize]>) -> Result<Vec<usize>> {
    let width = n_s * t;
    match order {
        None => Ok((0..width).map(|d| (d % n_s) * t + d / n_s).collect()),
        Some(o) => {
            let mut seen = vec![false; width];
            if o.len() != width || o.iter().any(|&b| b >= width || std::mem::replace(&mut seen[b], true)) {
                return Err(Error::Config(format!("detector order must be a permutation of 0..{width}")));
            }
            Ok(o.to_vec())
        }
    }
}

/// Reads detection events and observable flips in the `01` text format,
/// one shot per line.
pub fn import_01(
    dets_path: &Path,
    obs_path: &Path,
    n_s: usize,
    t: usize,
    detector_order: Option<&[usize]>,
) -> Result<Dataset> {
    let map = detector_map(n_s, t, detector_order)?;
    let dets = fs::read_to_string(dets_path).map_err(|e| Error::io(dets_path, e))?;
    let obs = fs::read_to_string(obs_path).map_err(|e| Error::io(obs_path, e))?;
    let dets: Vec<&str> = dets.lines().collect();
    let obs: Vec<&str> = obs.lines().collect();
    if dets.len() != obs.len() {
        return Err(Error::parse(
            dets.len().min(obs.len()) + 1,
            format!("{} detector lines but {} observable lines", dets.len(), obs.len()),
        ));
    }
    let mut ds = Dataset::new(n_s, t, 0);
    for (i, (d, o)) in dets.iter().zip(&obs).enumerate() {
        let raw = parse_bits(d, n_s * t, i + 1)?;
        let mut bits = vec![0u8; n_s * t];
        for (det, &b) in raw.iter().enumerate() {
            bits[map[det]] = b;
        }
        let label = match *o {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::parse(i + 1, format!("bad observable line {other:?}"))),
        };
        ds.records.push(SyndromeRecord { bits, label });
    }
    Ok(ds)
}

/// Inverse of [`import_01`] under the same detector order.
pub fn export_01(ds: &Dataset, dets_path: &Path, obs_path: &Path, detector_order: Option<&[usize]>) -> Result<()> {
    let map = detector_map(ds.n_s, ds.t, detector_order)?;
    let mut dets = String::new();
    let mut obs = String::new();
    for r in &ds.records {
        dets.extend(map.iter().map(|&b| if r.bits[b] == 1 { '1' } else { '0' }));
        dets.push('\n');
        obs.push(if r.label == 1 { '1' } else { '0' });
        obs.push('\n');
    }
    fs::write(dets_path, dets).map_err(|e| Error::io(dets_path, e))?;
    fs::write(obs_path, obs).map_err(|e| Error::io(obs_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codesim::{generate, NoiseModel};
    use proptest::prelude::*;

    fn tmpdir(tag: &str) -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("advqec-io-{tag}-{}", std::process::id()));
        fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn empty_dataset_round_trips() {
        let ds = Dataset::new(4, 2, 0);
        assert_eq!(parse_dataset(&render_dataset(&ds)).unwrap(), ds);
        // header without split field
        assert_eq!(parse_dataset("synd v1 ns=4 t=2\n").unwrap(), ds);
    }

    #[test]
    fn single_record_uses_node_major_indexing() {
        let ds = parse_dataset("synd v1 ns=4 t=2\n01000000 1\n").unwrap();
        assert_eq!(ds.records[0].label, 1);
        assert_eq!(ds.records[0].bits, vec![0, 1, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn malformed_input_reports_line_numbers() {
        let cases = [
            ("synd v2 ns=4 t=2\n", 1),
            ("nope\n", 1),
            ("synd v1 ns=4\n", 1),
            ("synd v1 ns=4 t=2\n00000000 0\n0000000 0\n", 3),
            ("synd v1 ns=4 t=2\n0000x000 0\n", 2),
            ("synd v1 ns=4 t=2\n00000000 0\n00000000 2\n", 3),
            ("synd v1 ns=4 t=2\n00000000\n", 2),
        ];
        for (text, want) in cases {
            match parse_dataset(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn large_dataset_is_byte_identical_after_round_trip() {
        let ds = generate(&NoiseModel::rep_code(0.05, 0.05, 2), 50_000, 8).unwrap();
        let dir = tmpdir("big");
        let path = dir.join("d.synd");
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, ds);
        let again = dir.join("e.synd");
        write_dataset(&back, &again).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }

    #[test]
    fn import_maps_round_major_input_to_node_major() {
        let dir = tmpdir("imp");
        fs::write(dir.join("d.01"), "00000000\n10000000\n00001000\n").unwrap();
        fs::write(dir.join("o.01"), "0\n1\n0\n").unwrap();
        let ds = import_01(&dir.join("d.01"), &dir.join("o.01"), 4, 2, None).unwrap();
        assert_eq!(ds.records[0], SyndromeRecord { bits: vec![0; 8], label: 0 });
        assert_eq!(ds.records[1].bits, vec![1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(ds.records[1].label, 1);
        // detector 4 is node 0 in round 2
        assert_eq!(ds.records[2].bits, vec![0, 1, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn import_rejects_mismatched_and_invalid_files() {
        let dir = tmpdir("bad");
        fs::write(dir.join("d.01"), "00000000\n00000000\n").unwrap();
        fs::write(dir.join("o.01"), "0\n").unwrap();
        assert!(matches!(
            import_01(&dir.join("d.01"), &dir.join("o.01"), 4, 2, None),
            Err(Error::Parse { .. })
        ));
        fs::write(dir.join("o.01"), "0\n0\n").unwrap();
        fs::write(dir.join("d.01"), "00000000\n00000020\n").unwrap();
        assert!(matches!(
            import_01(&dir.join("d.01"), &dir.join("o.01"), 4, 2, None),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(import_01(&dir.join("d.01"), &dir.join("o.01"), 4, 2, Some(&[0, 1, 2])).is_err());
    }

    #[test]
    fn export_then_import_is_identity() {
        let ds = generate(&NoiseModel::rep_code(0.1, 0.1, 2), 2_000, 3).unwrap();
        let dir = tmpdir("rt01");
        let order = [7, 6, 5, 4, 3, 2, 1, 0];
        for o in [None, Some(&order[..])] {
            export_01(&ds, &dir.join("d"), &dir.join("o"), o).unwrap();
            let back = import_01(&dir.join("d"), &dir.join("o"), 4, 2, o).unwrap();
            assert_eq!(back.records, ds.records);
        }
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(
            recs in proptest::collection::vec((proptest::collection::vec(0u8..2, 6), 0u8..2), 0..40),
            seed in any::<u64>(),
        ) {
            let mut ds = Dataset::new(3, 2, seed);
            for (bits, label) in recs {
                ds.push(SyndromeRecord { bits, label }).unwrap();
            }
            prop_assert_eq!(parse_dataset(&render_dataset(&ds)).unwrap(), ds);
        }
    }
}
