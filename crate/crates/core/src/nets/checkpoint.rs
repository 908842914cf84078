//! Checkpoint files: the magic line `MSDF1`, a `key=value` text header ending
//! at a blank line, then little-endian `f64` arrays in the order listed by the
//! header's `arrays` key.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{PfArch, PhaseFieldNetwork, SdfArch, SdfNetwork};
use crate::trainer::AdamState;
use crate::{Error, Result};

pub const MAGIC: &str = "MSDF1";
const VERSION: u32 = 1;
const ARRAYS: [&str; 6] = ["sdf.params", "pf.params", "adam.sdf.m", "adam.sdf.v", "adam.pf.m", "adam.pf.v"];

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub sdf: SdfNetwork,
    pub pf: PhaseFieldNetwork,
    pub adam_sdf: AdamState,
    pub adam_pf: AdamState,
    /// Number of completed epochs.
    pub epoch: usize,
    pub seed: u64,
}

impl Checkpoint {
    pub fn check_arch(&self, sdf: &SdfArch, pf: &PfArch) -> Result<()> {
        if self.sdf.arch() != sdf || self.pf.arch() != pf {
            return Err(Error::ArchitectureMismatch(format!(
                "checkpoint has {:?} / {:?}, run expects {:?} / {:?}",
                self.sdf.arch(),
                self.pf.arch(),
                sdf,
                pf
            )));
        }
        Ok(())
    }
}

fn f64_repr(v: f64) -> String {
    format!("{v:?}")
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let (s, p) = (ckpt.sdf.arch(), ckpt.pf.arch());
    let mut header = String::new();
    let mut kv = |k: &str, v: String| {
        header.push_str(k);
        header.push('=');
        header.push_str(&v);
        header.push('\n');
    };
    kv("version", VERSION.to_string());
    kv("dim", s.dim.to_string());
    kv("sdf.width", s.width.to_string());
    kv("sdf.depth", s.depth.to_string());
    kv("sdf.omega0", f64_repr(s.omega0));
    kv("pf.width", p.width.to_string());
    kv("pf.blocks", p.blocks.to_string());
    kv("pf.omega0", f64_repr(p.omega0));
    kv("pf.delta", f64_repr(p.delta));
    kv("pf.head_bias", f64_repr(p.head_bias));
    for (name, st) in [("adam.sdf", &ckpt.adam_sdf), ("adam.pf", &ckpt.adam_pf)] {
        kv(&format!("{name}.beta1"), f64_repr(st.beta1));
        kv(&format!("{name}.beta2"), f64_repr(st.beta2));
        kv(&format!("{name}.eps"), f64_repr(st.eps));
        kv(&format!("{name}.step"), st.step.to_string());
    }
    kv("epoch", ckpt.epoch.to_string());
    kv("seed", ckpt.seed.to_string());
    let arrays: [&[f64]; 6] = [
        ckpt.sdf.params(),
        ckpt.pf.params(),
        &ckpt.adam_sdf.m,
        &ckpt.adam_sdf.v,
        &ckpt.adam_pf.m,
        &ckpt.adam_pf.v,
    ];
    kv("arrays", ARRAYS.join(","));
    kv(
        "lengths",
        arrays.iter().map(|a| a.len().to_string()).collect::<Vec<_>>().join(","),
    );

    let mut bytes = Vec::with_capacity(header.len() + 16 + arrays.iter().map(|a| a.len() * 8).sum::<usize>());
    bytes.extend_from_slice(MAGIC.as_bytes());
    bytes.push(b'\n');
    bytes.extend_from_slice(header.as_bytes());
    bytes.push(b'\n');
    for a in arrays {
        for v in a {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    parse(&bytes)
}

fn parse(bytes: &[u8]) -> Result<Checkpoint> {
    let magic_len = MAGIC.len() + 1;
    if bytes.len() < magic_len || &bytes[..MAGIC.len()] != MAGIC.as_bytes() || bytes[MAGIC.len()] != b'\n' {
        return Err(Error::BadFormat("missing MSDF1 magic".into()));
    }
    let rest = &bytes[magic_len..];
    let end = rest
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::Truncated("header not terminated".into()))?;
    let header = std::str::from_utf8(&rest[..end]).map_err(|_| Error::BadFormat("header is not UTF-8".into()))?;
    let mut body = &rest[end + 2..];

    let mut kv = BTreeMap::new();
    for (n, line) in header.lines().enumerate() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::BadFormat(format!("header line {} is not key=value", n + 2)))?;
        kv.insert(k.trim(), v.trim());
    }
    let get = |k: &str| -> Result<&str> {
        kv.get(k)
            .copied()
            .ok_or_else(|| Error::BadFormat(format!("missing header key `{k}`")))
    };
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| Error::BadFormat(format!("bad value `{v}` for `{k}`")))
    }
    let version: u32 = num("version", get("version")?)?;
    if version != VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let n = |k: &str| -> Result<usize> { num(k, get(k)?) };
    let f = |k: &str| -> Result<f64> { num(k, get(k)?) };
    let dim = n("dim")?;
    let sdf_arch = SdfArch {
        dim,
        width: n("sdf.width")?,
        depth: n("sdf.depth")?,
        omega0: f("sdf.omega0")?,
    };
    let pf_arch = PfArch {
        dim,
        width: n("pf.width")?,
        blocks: n("pf.blocks")?,
        omega0: f("pf.omega0")?,
        delta: f("pf.delta")?,
        head_bias: f("pf.head_bias")?,
    };
    let mut sdf = SdfNetwork::zeros(sdf_arch).map_err(|e| Error::BadFormat(e.to_string()))?;
    let mut pf = PhaseFieldNetwork::zeros(pf_arch).map_err(|e| Error::BadFormat(e.to_string()))?;

    if get("arrays")? != ARRAYS.join(",") {
        return Err(Error::BadFormat("unexpected array list".into()));
    }
    let lengths: Vec<usize> = get("lengths")?
        .split(',')
        .map(|s| num("lengths", s))
        .collect::<Result<_>>()?;
    let expected = [
        sdf.n_params(),
        pf.n_params(),
        sdf.n_params(),
        sdf.n_params(),
        pf.n_params(),
        pf.n_params(),
    ];
    if lengths != expected {
        return Err(Error::ArchitectureMismatch(format!(
            "array lengths {lengths:?} do not fit the declared architecture ({expected:?})"
        )));
    }
    let mut take = |len: usize| -> Result<Vec<f64>> {
        if body.len() < len * 8 {
            return Err(Error::Truncated(format!(
                "need {} bytes, {} left",
                len * 8,
                body.len()
            )));
        }
        let (head, tail) = body.split_at(len * 8);
        body = tail;
        Ok(head
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    sdf.params_mut().copy_from_slice(&take(lengths[0])?);
    pf.params_mut().copy_from_slice(&take(lengths[1])?);
    let mut adam = |name: &str, len: usize| -> Result<AdamState> {
        let mut st = AdamState::new(len, f(&format!("{name}.beta1"))?, f(&format!("{name}.beta2"))?);
        st.eps = f(&format!("{name}.eps"))?;
        st.step = num("step", get(&format!("{name}.step"))?)?;
        st.m = take(len)?;
        st.v = take(len)?;
        Ok(st)
    };
    let adam_sdf = adam("adam.sdf", lengths[0])?;
    let adam_pf = adam("adam.pf", lengths[1])?;
    if !body.is_empty() {
        return Err(Error::BadFormat(format!("{} trailing bytes", body.len())));
    }
    Ok(Checkpoint {
        sdf,
        pf,
        adam_sdf,
        adam_pf,
        epoch: n("epoch")?,
        seed: num("seed", get("seed")?)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(dim: usize) -> Checkpoint {
        let sdf = SdfNetwork::init(
            SdfArch {
                dim,
                width: 6,
                depth: 2,
                omega0: 30.0,
            },
            1,
        )
        .unwrap();
        let pf = PhaseFieldNetwork::init(
            PfArch {
                dim,
                width: 5,
                blocks: 2,
                omega0: 30.0,
                delta: 0.1,
                head_bias: 29.44,
            },
            2,
        )
        .unwrap();
        let mut adam_sdf = AdamState::new(sdf.n_params(), 0.9, 0.98);
        let mut adam_pf = AdamState::new(pf.n_params(), 0.9, 0.999);
        adam_sdf.m.iter_mut().enumerate().for_each(|(i, m)| *m = (i as f64).sin());
        adam_pf.v.iter_mut().enumerate().for_each(|(i, v)| *v = 1.0 / (i as f64 + 3.0));
        adam_sdf.step = 17;
        adam_pf.step = 4;
        Checkpoint {
            sdf,
            pf,
            adam_sdf,
            adam_pf,
            epoch: 12,
            seed: u64::MAX - 3,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.msdf");
        let ck = sample(2);
        save_checkpoint(&path, &ck).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let x = [rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)];
            assert_eq!(back.sdf.eval(&x).to_bits(), ck.sdf.eval(&x).to_bits());
            assert_eq!(back.pf.eval(&x).to_bits(), ck.pf.eval(&x).to_bits());
        }
    }

    #[test]
    fn corrupt_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.msdf");
        save_checkpoint(&path, &sample(2)).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::BadFormat(_))));
    }

    #[test]
    fn truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.msdf");
        save_checkpoint(&path, &sample(3)).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Truncated(_))));
    }

    #[test]
    fn version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.msdf");
        save_checkpoint(&path, &sample(2)).unwrap();
        let text = fs::read(&path).unwrap();
        let needle = b"version=1\n";
        let pos = text.windows(needle.len()).position(|w| w == needle).unwrap();
        let mut bytes = text.clone();
        bytes[pos + 8] = b'7';
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::VersionMismatch(7))));
    }

    #[test]
    fn dimension_mismatch_is_architecture_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.msdf");
        let ck = sample(2);
        save_checkpoint(&path, &ck).unwrap();
        let back = load_checkpoint(&path).unwrap();
        let three = sample(3);
        assert!(matches!(
            back.check_arch(three.sdf.arch(), three.pf.arch()),
            Err(Error::ArchitectureMismatch(_))
        ));
        assert!(back.check_arch(ck.sdf.arch(), ck.pf.arch()).is_ok());
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_checkpoint("/nonexistent/ck.msdf"),
            Err(Error::MissingFile(_))
        ));
    }
}
