//! `RLGN` checkpoint container: named f32 tensors, freeze flags, string
//! metadata and an optional block of demonstration triples.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use transferlab_core::agent::{policy_architecture, PolicyShape};
use transferlab_core::imitation::DemoBuffer;
use transferlab_core::numerics::{Architecture, NetworkParams, Tensor};
use transferlab_core::translate::{SharingMode, TranslatorPair, TranslatorShape};

use crate::error::{FormatError, Result};
use crate::wire::{put_string, put_u32, Cursor};

pub const MAGIC: &[u8; 4] = b"RLGN";
pub const VERSION: u32 = 1;

fn corrupt(msg: String) -> FormatError {
    FormatError::CorruptCheckpoint(msg)
}

/// Everything one checkpoint file holds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub params: NetworkParams,
    pub metadata: BTreeMap<String, String>,
    pub demos: DemoBuffer,
}

impl Container {
    pub fn meta(&self, key: &str) -> Result<&str> {
        self.metadata.get(key).map(String::as_str).ok_or_else(|| corrupt(format!("metadata `{key}` missing")))
    }

    fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta(key)?.parse().map_err(|_| corrupt(format!("metadata `{key}` is malformed")))
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        let got = self.meta("kind")?;
        if got != kind {
            return Err(corrupt(format!("expected a {kind} checkpoint, found {got}")));
        }
        Ok(())
    }
}

pub fn write_container(w: &mut impl Write, c: &Container) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    put_u32(w, c.params.len())?;
    for e in c.params.iter() {
        put_string(w, &e.name)?;
        let rank = u8::try_from(e.tensor.shape().len()).map_err(|_| corrupt(format!("`{}` has too many dimensions", e.name)))?;
        w.write_all(&[rank])?;
        for &d in e.tensor.shape() {
            put_u32(w, d)?;
        }
        write_f32s(w, e.tensor.data())?;
    }
    let frozen: Vec<&str> = c.params.iter().filter(|e| e.frozen).map(|e| e.name.as_str()).collect();
    put_u32(w, frozen.len())?;
    for name in frozen {
        put_string(w, name)?;
    }
    put_u32(w, c.metadata.len())?;
    for (k, v) in &c.metadata {
        put_string(w, k)?;
        put_string(w, v)?;
    }
    let d = &c.demos;
    put_u32(w, d.len())?;
    if let Some(first) = d.observations.first() {
        w.write_all(&[first.shape().len() as u8])?;
        for &dim in first.shape() {
            put_u32(w, dim)?;
        }
        for ((obs, &a), &r) in d.observations.iter().zip(&d.actions).zip(&d.returns) {
            if obs.shape() != first.shape() {
                return Err(corrupt("demonstration observations differ in shape".into()));
            }
            write_f32s(w, obs.data())?;
            let a = u8::try_from(a).map_err(|_| corrupt(format!("action {a} does not fit a byte")))?;
            w.write_all(&[a])?;
            w.write_all(&r.to_le_bytes())?;
        }
    }
    Ok(())
}

fn write_f32s(w: &mut impl Write, data: &[f32]) -> std::io::Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)
}

fn read_dims(r: &mut Cursor) -> Result<Vec<usize>> {
    let rank = r.u8()? as usize;
    (0..rank).map(|_| r.u32().map(|d| d as usize)).collect()
}

fn read_f32s(r: &mut Cursor, n: usize) -> Result<Vec<f32>> {
    let bytes = r.take(n.checked_mul(4).ok_or_else(|| r.fail("tensor size overflows"))?)?;
    Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
}

pub fn read_container(buf: &[u8]) -> Result<Container> {
    let mut r = Cursor::new(buf, corrupt);
    if r.take(4)? != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let mut c = Container::default();
    for _ in 0..r.u32()? {
        let name = r.string()?;
        let dims = read_dims(&mut r)?;
        let data = read_f32s(&mut r, dims.iter().product())?;
        c.params.insert(name, Tensor::new(dims, data)?).map_err(|e| corrupt(e.to_string()))?;
    }
    for _ in 0..r.u32()? {
        let name = r.string()?;
        c.params.set_frozen(&name, true).map_err(|e| corrupt(e.to_string()))?;
    }
    for _ in 0..r.u32()? {
        let k = r.string()?;
        let v = r.string()?;
        c.metadata.insert(k, v);
    }
    let triples = r.u32()? as usize;
    if triples > 0 {
        let dims = read_dims(&mut r)?;
        let n = dims.iter().product();
        for _ in 0..triples {
            let obs = Tensor::new(dims.clone(), read_f32s(&mut r, n)?)?;
            c.demos.observations.push(obs);
            c.demos.actions.push(r.u8()? as usize);
            c.demos.returns.push(r.f32()?);
        }
    }
    if !r.is_empty() {
        return Err(corrupt("trailing bytes after the metadata block".into()));
    }
    if let Some(v) = c.metadata.get("reference") {
        c.demos.reference = v.parse().map_err(|_| corrupt("metadata `reference` is malformed".into()))?;
    }
    Ok(c)
}

pub fn save_container(path: &Path, c: &Container) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_container(&mut w, c)?;
    w.flush()?;
    Ok(())
}

pub fn load_container(path: &Path) -> Result<Container> {
    read_container(&fs::read(path)?)
}

/// A policy network together with the shape needed to rebuild its architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyCheckpoint {
    pub shape: PolicyShape,
    pub params: NetworkParams,
}

impl PolicyCheckpoint {
    pub fn architecture(&self) -> Result<Architecture> {
        Ok(policy_architecture(&self.shape)?)
    }

    pub fn to_container(&self) -> Container {
        let s = &self.shape;
        let mut metadata = BTreeMap::new();
        metadata.insert("kind".into(), "policy".into());
        metadata.insert("obs_size".into(), s.obs_size.to_string());
        metadata.insert("channels".into(), s.channels.map(|c| c.to_string()).join(","));
        metadata.insert("hidden".into(), s.hidden.to_string());
        Container { params: self.params.clone(), metadata, demos: DemoBuffer::default() }
    }

    pub fn from_container(c: Container) -> Result<Self> {
        c.expect_kind("policy")?;
        let channels: Vec<usize> = c.meta("channels")?.split(',').map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| corrupt("metadata `channels` is malformed".into()))?;
        let channels: [usize; 3] = channels.try_into().map_err(|_| corrupt("metadata `channels` needs three widths".into()))?;
        let shape = PolicyShape { obs_size: c.meta_parse("obs_size")?, channels, hidden: c.meta_parse("hidden")? };
        let template = transferlab_core::agent::init_policy(&policy_architecture(&shape)?, 0)?;
        if !template.same_layout(&c.params) {
            return Err(corrupt("tensors do not match the recorded policy shape".into()));
        }
        Ok(PolicyCheckpoint { shape, params: c.params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_container(path, &self.to_container())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(load_container(path)?)
    }
}

const PARTS: [&str; 5] = ["g1", "g2", "shared", "d1", "d2"];

/// Tensors are stored as `g1/…`, `g2/…`, `shared/…`, `d1/…`, `d2/…`.
pub fn translator_to_container(pair: &TranslatorPair, shape: &TranslatorShape) -> Result<Container> {
    let mut params = NetworkParams::new();
    for (part, p) in PARTS.iter().zip([&pair.g1, &pair.g2, &pair.shared, &pair.d1, &pair.d2]) {
        for e in p.iter() {
            let name = format!("{part}/{}", e.name);
            params.insert(name.clone(), e.tensor.clone())?;
            params.set_frozen(&name, e.frozen)?;
        }
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("kind".into(), "translator".into());
    metadata.insert("sharing_mode".into(), pair.mode.id().into());
    for (k, v) in [("channels", shape.channels), ("height", shape.height), ("width", shape.width), ("gen_base", shape.gen_base), ("disc_base", shape.disc_base)] {
        metadata.insert(k.into(), v.to_string());
    }
    Ok(Container { params, metadata, demos: DemoBuffer::default() })
}

pub fn translator_from_container(c: &Container) -> Result<(TranslatorPair, TranslatorShape)> {
    c.expect_kind("translator")?;
    let mode = SharingMode::from_id(c.meta("sharing_mode")?).ok_or_else(|| corrupt("unknown sharing mode".into()))?;
    let shape = TranslatorShape {
        channels: c.meta_parse("channels")?,
        height: c.meta_parse("height")?,
        width: c.meta_parse("width")?,
        gen_base: c.meta_parse("gen_base")?,
        disc_base: c.meta_parse("disc_base")?,
    };
    let mut parts: [NetworkParams; 5] = Default::default();
    for e in c.params.iter() {
        let (prefix, name) = e.name.split_once('/').ok_or_else(|| corrupt(format!("tensor `{}` has no part prefix", e.name)))?;
        let i = PARTS.iter().position(|p| *p == prefix).ok_or_else(|| corrupt(format!("unknown part `{prefix}`")))?;
        parts[i].insert(name, e.tensor.clone())?;
        parts[i].set_frozen(name, e.frozen)?;
    }
    let [g1, g2, shared, d1, d2] = parts;
    let pair = TranslatorPair::from_parts(&shape, mode, g1, g2, shared, d1, d2).map_err(|e| corrupt(e.to_string()))?;
    Ok((pair, shape))
}

pub fn save_translator(path: &Path, pair: &TranslatorPair, shape: &TranslatorShape) -> Result<()> {
    save_container(path, &translator_to_container(pair, shape)?)
}

pub fn load_translator(path: &Path) -> Result<(TranslatorPair, TranslatorShape)> {
    translator_from_container(&load_container(path)?)
}

pub fn save_demos(path: &Path, demos: &DemoBuffer) -> Result<()> {
    let mut metadata = BTreeMap::new();
    metadata.insert("kind".into(), "demos".into());
    metadata.insert("reference".into(), demos.reference.to_string());
    save_container(path, &Container { params: NetworkParams::new(), metadata, demos: demos.clone() })
}

pub fn load_demos(path: &Path) -> Result<DemoBuffer> {
    let c = load_container(path)?;
    c.expect_kind("demos")?;
    Ok(c.demos)
}
