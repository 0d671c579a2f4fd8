//! Readers and writers for the four CSV artifacts.
//!
//! Every file starts with an optional `# coopra ...` metadata line followed by
//! a mandatory header row whose column order is fixed. Readers skip `#` lines.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{
    net_feature_names, Direction, DirectionalLoad, NetLoadFeatures, TimestampMs,
    TransmissionRecord, TtiAllocation, UeFeatures, WindowLoad,
};

pub const TRANSMISSIONS_HEADER: [&str; 11] = [
    "t_start_ms",
    "direction",
    "rsrp_dbm",
    "rsrq_db",
    "sinr_db",
    "cqi",
    "ta",
    "freq_mhz",
    "velocity_mps",
    "payload_bytes",
    "throughput_mbps",
];

pub const TTI_HEADER: [&str; 6] = ["t_ms", "direction", "rnti", "n_prb", "mcs", "tbs_bits"];

pub const NET_HEADER: [&str; 10] = [
    "window_start_ms",
    "direction",
    "mean_n_ue",
    "std_n_ue",
    "mean_n_prb",
    "std_n_prb",
    "mean_mcs",
    "std_mcs",
    "mean_tbs",
    "std_tbs",
];

pub fn fused_header() -> Vec<String> {
    TRANSMISSIONS_HEADER
        .iter()
        .map(|s| s.to_string())
        .chain(net_feature_names())
        .collect()
}

/// Provenance written as the first line of every artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactMeta {
    pub tool_version: String,
    pub stage: String,
    pub seed: Option<u64>,
    pub config_hash: String,
}

impl ArtifactMeta {
    pub fn new(stage: &str, seed: Option<u64>, config_hash: &str) -> Self {
        ArtifactMeta {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            stage: stage.to_string(),
            seed,
            config_hash: config_hash.to_string(),
        }
    }

    pub fn to_line(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# coopra {} stage={} seed={} config={}",
            self.tool_version, self.stage, seed, self.config_hash
        )
    }

    pub fn parse_line(line: &str) -> Option<ArtifactMeta> {
        let rest = line.strip_prefix("# coopra ")?;
        let mut parts = rest.split_whitespace();
        let tool_version = parts.next()?.to_string();
        let (mut stage, mut seed, mut config) = (None, None, None);
        for kv in parts {
            match kv.split_once('=')? {
                ("stage", v) => stage = Some(v.to_string()),
                ("seed", v) => seed = Some(v.parse::<u64>().ok()),
                ("config", v) => config = Some(v.to_string()),
                _ => {}
            }
        }
        Some(ArtifactMeta {
            tool_version,
            stage: stage?,
            seed: seed?,
            config_hash: config?,
        })
    }
}

/// Metadata line of an artifact, if it has one.
pub fn read_meta(path: &Path) -> Result<Option<ArtifactMeta>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    Ok(ArtifactMeta::parse_line(first.trim_end()))
}

fn open_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(BufReader::with_capacity(1 << 20, file)))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::with_capacity(1 << 20, file))
}

fn check_header<S: AsRef<str>>(
    path: &Path,
    reader: &mut csv::Reader<BufReader<File>>,
    expected: &[S],
) -> Result<()> {
    let got = reader.headers()?;
    let matches = got.len() == expected.len()
        && got.iter().zip(expected).all(|(g, e)| g.trim() == e.as_ref());
    if !matches {
        let expected: Vec<&str> = expected.iter().map(|s| s.as_ref()).collect();
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!(
                "header mismatch: expected {}, found {}",
                expected.join(","),
                got.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    Ok(())
}

struct Fields<'a> {
    path: &'a Path,
    record: &'a csv::StringRecord,
    line: u64,
}

impl Fields<'_> {
    fn get<T: std::str::FromStr>(&self, i: usize, name: &str) -> Result<T> {
        let raw = self.record.get(i).ok_or_else(|| self.err(format!("missing {name}")))?;
        raw.trim()
            .parse::<T>()
            .map_err(|_| self.err(format!("bad {name} value {raw:?}")))
    }

    fn direction(&self, i: usize) -> Result<Direction> {
        let raw = self.record.get(i).unwrap_or("");
        raw.parse().map_err(|_| self.err(format!("bad direction {raw:?}")))
    }

    fn err(&self, message: String) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            message: format!("line {}: {message}", self.line),
        }
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn write_meta<W: Write>(w: &mut W, meta: Option<&ArtifactMeta>) -> io::Result<()> {
    if let Some(m) = meta {
        writeln!(w, "{}", m.to_line())?;
    }
    Ok(())
}

// --- transmissions.csv -----------------------------------------------------

fn transmission_fields(r: &TransmissionRecord) -> [String; 11] {
    [
        r.t_start.0.to_string(),
        r.direction.code().to_string(),
        r.ue.rsrp.to_string(),
        r.ue.rsrq.to_string(),
        r.ue.sinr.to_string(),
        r.ue.cqi.to_string(),
        r.ue.ta.to_string(),
        r.ue.freq_mhz.to_string(),
        r.ue.velocity_mps.to_string(),
        r.ue.payload_bytes.to_string(),
        r.throughput_mbps.to_string(),
    ]
}

fn parse_transmission(f: &Fields<'_>) -> Result<TransmissionRecord> {
    Ok(TransmissionRecord {
        t_start: TimestampMs(f.get(0, "t_start_ms")?),
        direction: f.direction(1)?,
        ue: UeFeatures {
            rsrp: f.get(2, "rsrp_dbm")?,
            rsrq: f.get(3, "rsrq_db")?,
            sinr: f.get(4, "sinr_db")?,
            cqi: f.get(5, "cqi")?,
            ta: f.get(6, "ta")?,
            freq_mhz: f.get(7, "freq_mhz")?,
            velocity_mps: f.get(8, "velocity_mps")?,
            payload_bytes: f.get(9, "payload_bytes")?,
        },
        net: None,
        throughput_mbps: f.get(10, "throughput_mbps")?,
    })
}

pub fn write_transmissions<W: Write>(
    out: W,
    records: &[TransmissionRecord],
    meta: Option<&ArtifactMeta>,
) -> Result<()> {
    let mut out = out;
    write_meta(&mut out, meta).map_err(|e| Error::io("<transmissions>", e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRANSMISSIONS_HEADER)?;
    for r in records {
        w.write_record(transmission_fields(r))?;
    }
    w.flush().map_err(|e| Error::io("<transmissions>", e))?;
    Ok(())
}

pub fn write_transmissions_file(
    path: &Path,
    records: &[TransmissionRecord],
    meta: Option<&ArtifactMeta>,
) -> Result<()> {
    write_transmissions(create_writer(path)?, records, meta)
}

pub fn read_transmissions(path: &Path) -> Result<Vec<TransmissionRecord>> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, &TRANSMISSIONS_HEADER)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let record = row?;
        out.push(parse_transmission(&Fields {
            path,
            line: line_of(&record),
            record: &record,
        })?);
    }
    Ok(out)
}

// --- tti_allocations.csv -----------------------------------------------------

/// Streaming writer; the trace of a long scenario does not fit in memory.
pub struct TtiCsvWriter<W: Write> {
    inner: W,
}

impl<W: Write> TtiCsvWriter<W> {
    pub fn new(mut out: W, meta: Option<&ArtifactMeta>) -> Result<Self> {
        write_meta(&mut out, meta).map_err(|e| Error::io("<tti trace>", e))?;
        writeln!(out, "{}", TTI_HEADER.join(",")).map_err(|e| Error::io("<tti trace>", e))?;
        Ok(TtiCsvWriter { inner: out })
    }

    pub fn write(&mut self, a: &TtiAllocation) -> Result<()> {
        writeln!(
            self.inner,
            "{},{},{},{},{},{}",
            a.t.0,
            a.direction.code(),
            a.rnti,
            a.n_prb,
            a.mcs,
            a.tbs_bits
        )
        .map_err(|e| Error::io("<tti trace>", e))
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(|e| Error::io("<tti trace>", e))?;
        Ok(self.inner)
    }
}

impl TtiCsvWriter<BufWriter<File>> {
    pub fn create(path: &Path, meta: Option<&ArtifactMeta>) -> Result<Self> {
        TtiCsvWriter::new(create_writer(path)?, meta)
    }
}

/// Streaming reader over a TTI trace.
pub struct TtiCsvReader<'p> {
    path: &'p Path,
    reader: csv::Reader<BufReader<File>>,
    record: csv::StringRecord,
}

impl<'p> TtiCsvReader<'p> {
    pub fn open(path: &'p Path) -> Result<Self> {
        let mut reader = open_reader(path)?;
        check_header(path, &mut reader, &TTI_HEADER)?;
        Ok(TtiCsvReader {
            path,
            reader,
            record: csv::StringRecord::new(),
        })
    }
}

impl Iterator for TtiCsvReader<'_> {
    type Item = Result<TtiAllocation>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.reader.read_record(&mut self.record) {
            Ok(false) => None,
            Err(e) => Some(Err(e.into())),
            Ok(true) => {
                let f = Fields {
                    path: self.path,
                    line: line_of(&self.record),
                    record: &self.record,
                };
                Some((|| {
                    Ok(TtiAllocation {
                        t: TimestampMs(f.get(0, "t_ms")?),
                        direction: f.direction(1)?,
                        rnti: f.get(2, "rnti")?,
                        n_prb: f.get(3, "n_prb")?,
                        mcs: f.get(4, "mcs")?,
                        tbs_bits: f.get(5, "tbs_bits")?,
                    })
                })())
            }
        }
    }
}

pub fn read_tti_allocations(path: &Path) -> Result<Vec<TtiAllocation>> {
    TtiCsvReader::open(path)?.collect()
}

// --- net_features.csv --------------------------------------------------------

pub fn write_net_features<W: Write>(
    out: W,
    windows: &[WindowLoad],
    meta: Option<&ArtifactMeta>,
) -> Result<()> {
    let mut out = out;
    write_meta(&mut out, meta).map_err(|e| Error::io("<net features>", e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(NET_HEADER)?;
    for win in windows {
        let mut fields = vec![win.window_start.0.to_string(), win.direction.code().to_string()];
        fields.extend(win.load.values().iter().map(|v| v.to_string()));
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io("<net features>", e))?;
    Ok(())
}

pub fn write_net_features_file(
    path: &Path,
    windows: &[WindowLoad],
    meta: Option<&ArtifactMeta>,
) -> Result<()> {
    write_net_features(create_writer(path)?, windows, meta)
}

/// Reads `net_features.csv`; the window length is not part of the schema and
/// must be supplied by the caller.
pub fn read_net_features(path: &Path, window_len_ms: u64) -> Result<Vec<WindowLoad>> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, &NET_HEADER)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let record = row?;
        let f = Fields {
            path,
            line: line_of(&record),
            record: &record,
        };
        let mut v = [0.0; 8];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = f.get(k + 2, NET_HEADER[k + 2])?;
        }
        out.push(WindowLoad {
            window_start: TimestampMs(f.get(0, "window_start_ms")?),
            window_len_ms,
            direction: f.direction(1)?,
            load: DirectionalLoad::from_values(v),
        });
    }
    Ok(out)
}

// --- fused.csv ---------------------------------------------------------------

pub fn write_fused<W: Write>(
    out: W,
    records: &[TransmissionRecord],
    meta: Option<&ArtifactMeta>,
) -> Result<()> {
    let mut out = out;
    write_meta(&mut out, meta).map_err(|e| Error::io("<fused>", e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(fused_header())?;
    for r in records {
        let net = r.net.as_ref().ok_or_else(|| {
            Error::Contract(format!("record at t={} has no network features", r.t_start))
        })?;
        let mut fields: Vec<String> = transmission_fields(r).into();
        for load in [&net.ul, &net.dl] {
            fields.extend(load.values().iter().map(|v| v.to_string()));
        }
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io("<fused>", e))?;
    Ok(())
}

pub fn write_fused_file(
    path: &Path,
    records: &[TransmissionRecord],
    meta: Option<&ArtifactMeta>,
) -> Result<()> {
    write_fused(create_writer(path)?, records, meta)
}

/// Reads `fused.csv`. The joined window is reconstructed as the
/// `window_len_ms` interval ending at each transmission's start.
pub fn read_fused(path: &Path, window_len_ms: u64) -> Result<Vec<TransmissionRecord>> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, &fused_header())?;
    let mut out = Vec::new();
    for row in reader.records() {
        let record = row?;
        let f = Fields {
            path,
            line: line_of(&record),
            record: &record,
        };
        let mut r = parse_transmission(&f)?;
        let mut loads = [DirectionalLoad::default(); 2];
        for (d, load) in loads.iter_mut().enumerate() {
            let mut v = [0.0; 8];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = f.get(11 + d * 8 + k, "net feature")?;
            }
            *load = DirectionalLoad::from_values(v);
        }
        r.net = Some(NetLoadFeatures {
            window_start: r.t_start.saturating_minus(window_len_ms),
            window_len_ms,
            ul: loads[0],
            dl: loads[1],
        });
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_record() -> impl Strategy<Value = TransmissionRecord> {
        (
            0u64..10_000_000,
            any::<bool>(),
            -140.0f64..-40.0,
            -20.0f64..0.0,
            -10.0f64..30.0,
            0u8..=15,
            0u32..1000,
            (600.0f64..3000.0, 0.0f64..40.0, 100_000u64..10_000_000, 0.01f64..100.0),
        )
            .prop_map(|(t, ul, rsrp, rsrq, sinr, cqi, ta, (freq, vel, payload, tp))| {
                TransmissionRecord {
                    t_start: TimestampMs(t),
                    direction: if ul { Direction::Uplink } else { Direction::Downlink },
                    ue: UeFeatures {
                        rsrp,
                        rsrq,
                        sinr,
                        cqi,
                        ta,
                        freq_mhz: freq,
                        velocity_mps: vel,
                        payload_bytes: payload,
                    },
                    net: None,
                    throughput_mbps: tp,
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn transmissions_round_trip(records in proptest::collection::vec(arb_record(), 0..20)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("t.csv");
            let meta = ArtifactMeta::new("simulate", Some(3), "abc");
            write_transmissions_file(&path, &records, Some(&meta)).unwrap();
            let back = read_transmissions(&path).unwrap();
            prop_assert_eq!(back.len(), records.len());
            for (a, b) in records.iter().zip(&back) {
                prop_assert_eq!(a.t_start, b.t_start);
                prop_assert_eq!(a.direction, b.direction);
                prop_assert_eq!(a.ue.cqi, b.ue.cqi);
                prop_assert_eq!(a.ue.ta, b.ue.ta);
                prop_assert_eq!(a.ue.payload_bytes, b.ue.payload_bytes);
                for (x, y) in [
                    (a.ue.rsrp, b.ue.rsrp),
                    (a.ue.rsrq, b.ue.rsrq),
                    (a.ue.sinr, b.ue.sinr),
                    (a.ue.freq_mhz, b.ue.freq_mhz),
                    (a.ue.velocity_mps, b.ue.velocity_mps),
                    (a.throughput_mbps, b.throughput_mbps),
                ] {
                    prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-300));
                }
            }
            prop_assert_eq!(read_meta(&path).unwrap(), Some(meta));
        }
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t_ms,rnti,direction,n_prb,mcs,tbs_bits\n").unwrap();
        let err = read_tti_allocations(&path).unwrap_err();
        assert!(err.to_string().contains("header mismatch"), "{err}");
    }

    #[test]
    fn tti_trace_round_trip() {
        let allocs = vec![
            TtiAllocation {
                t: TimestampMs(5),
                direction: Direction::Uplink,
                rnti: 7,
                n_prb: 10,
                mcs: 3,
                tbs_bits: 1234,
            },
            TtiAllocation {
                t: TimestampMs(5),
                direction: Direction::Downlink,
                rnti: 9,
                n_prb: 40,
                mcs: 28,
                tbs_bits: 27972,
            },
        ];
        let mut w = TtiCsvWriter::new(Vec::new(), None).unwrap();
        for a in &allocs {
            w.write(a).unwrap();
        }
        let bytes = w.finish().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tti.csv");
        std::fs::write(&path, &bytes).unwrap();
        assert_eq!(read_tti_allocations(&path).unwrap(), allocs);
        assert_eq!(read_meta(&path).unwrap(), None);
    }

    #[test]
    fn meta_line_parses() {
        let m = ArtifactMeta::new("fuse", None, "00ff");
        assert_eq!(ArtifactMeta::parse_line(&m.to_line()), Some(m));
        assert_eq!(ArtifactMeta::parse_line("t_ms,direction"), None);
    }
}
