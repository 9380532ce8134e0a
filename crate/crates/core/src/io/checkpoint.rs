//! Binary GAN checkpoints: little-endian, 32-bit parameters, bit-exact
//! roundtrip.
//!
//! ```text
//! "FGAN" | u32 version | u32 P | u32 D | u32 latent_dim | f64 leak
//! u8 class | u32 epochs_completed | u64 seed
//! tensor block (generator)
//! u8 has_training
//!   tensor block (critic)
//!   adam (critic) | adam (generator)
//!
//! tensor block: u32 count, then per tensor
//!   u32 name_len | name (UTF-8) | u32 rank | u32 dims[rank] | f32 data[∏dims]
//! adam: u64 t | f32 lr | f32 beta1 | f32 beta2 | f32 eps
//!       tensor block (first moments) | tensor block (second moments)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::folding::ClassLabel;
use crate::nn::{AdamState, Network, Tensor};
use crate::wgan::{build_critic, build_generator, GanArch, GanCheckpoint, TrainingState, CHECKPOINT_VERSION};

pub const MAGIC: &[u8; 4] = b"FGAN";

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn len32(&mut self, v: usize, what: &str) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} exceeds u32")))?;
        self.u32(v);
        Ok(())
    }

    fn tensors<'a>(&mut self, items: impl ExactSizeIterator<Item = (String, &'a Tensor<f32>)>) -> Result<()> {
        self.len32(items.len(), "tensor count")?;
        for (name, t) in items {
            self.len32(name.len(), "name length")?;
            self.buf.extend_from_slice(name.as_bytes());
            self.len32(t.rank(), "rank")?;
            for &d in t.shape() {
                self.len32(d, "dimension")?;
            }
            for &v in t.data() {
                self.f32(v);
            }
        }
        Ok(())
    }

    fn adam(&mut self, a: &AdamState<f32>, prefix: &str) -> Result<()> {
        self.u64(a.t);
        for v in [a.lr, a.beta1, a.beta2, a.eps] {
            self.f32(v);
        }
        self.tensors(a.m.iter().enumerate().map(|(i, t)| (format!("{prefix}.m.{i}"), t)))?;
        self.tensors(a.v.iter().enumerate().map(|(i, t)| (format!("{prefix}.v.{i}"), t)))
    }
}

pub fn checkpoint_to_bytes(ckpt: &GanCheckpoint<f32>) -> Result<Vec<u8>> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(ckpt.format_version);
    w.len32(ckpt.arch.rows, "rows")?;
    w.len32(ckpt.arch.cols, "cols")?;
    w.len32(ckpt.arch.latent_dim, "latent_dim")?;
    w.u64(ckpt.arch.leak.to_bits());
    w.u8(ckpt.class_label.index() as u8);
    w.u32(ckpt.epochs_completed);
    w.u64(ckpt.seed);
    let gen_state = ckpt.generator.named_state();
    w.tensors(gen_state.into_iter())?;
    match &ckpt.training {
        None => w.u8(0),
        Some(state) => {
            w.u8(1);
            w.tensors(state.critic.named_state().into_iter())?;
            w.adam(&state.critic_opt, "critic_opt")?;
            w.adam(&state.gen_opt, "gen_opt")?;
        }
    }
    Ok(w.buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(what.to_string()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn tensors(&mut self, block: &str) -> Result<Vec<(String, Tensor<f32>)>> {
        let count = self.u32(&format!("{block} tensor count"))?;
        let mut out = Vec::new();
        for i in 0..count {
            let slot = format!("{block} tensor #{i}");
            let name_len = self.u32(&format!("{slot} name length"))? as usize;
            let name = std::str::from_utf8(self.take(name_len, &format!("{slot} name"))?)
                .map_err(|_| Error::Format(format!("{slot} name is not UTF-8")))?
                .to_string();
            let rank = self.u32(&format!("tensor '{name}' rank"))? as usize;
            let mut dims = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                dims.push(self.u32(&format!("tensor '{name}' dimensions"))? as usize);
            }
            let len = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&l| l.checked_mul(4).is_some())
                .ok_or_else(|| Error::Format(format!("tensor '{name}' is implausibly large")))?;
            let bytes = self.take(len * 4, &format!("tensor '{name}' data"))?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            out.push((name.clone(), Tensor::from_vec(&dims, data).map_err(|e| Error::Format(format!("tensor '{name}': {e}")))?));
        }
        Ok(out)
    }

    fn adam(&mut self, prefix: &str, expected: &[&Tensor<f32>]) -> Result<AdamState<f32>> {
        let t = self.u64(&format!("{prefix} step count"))?;
        let mut hyper = [0f32; 4];
        for h in &mut hyper {
            *h = self.f32(&format!("{prefix} hyperparameters"))?;
        }
        let mut moments = Vec::new();
        for kind in ["m", "v"] {
            let block = format!("{prefix}.{kind}");
            let ts = self.tensors(&block)?;
            if ts.len() != expected.len() {
                return Err(Error::Format(format!(
                    "{block} has {} tensors, expected {}",
                    ts.len(),
                    expected.len()
                )));
            }
            let mut out = Vec::with_capacity(ts.len());
            for (i, ((name, t), p)) in ts.into_iter().zip(expected).enumerate() {
                if name != format!("{block}.{i}") || t.shape() != p.shape() {
                    return Err(Error::Format(format!("unexpected optimizer tensor '{name}' {:?}", t.shape())));
                }
                out.push(t);
            }
            moments.push(out);
        }
        let v = moments.pop().unwrap();
        let m = moments.pop().unwrap();
        let [lr, beta1, beta2, eps] = hyper;
        Ok(AdamState {
            m,
            v,
            t,
            lr,
            beta1,
            beta2,
            eps,
        })
    }
}

/// Copies named tensors into a freshly built network, requiring exactly the
/// expected names and shapes in order.
fn fill(net: &mut Network<f32>, tensors: Vec<(String, Tensor<f32>)>, what: &str) -> Result<()> {
    let mut slots = net.named_state_mut();
    if slots.len() != tensors.len() {
        return Err(Error::Format(format!(
            "{what} has {} tensors, the architecture needs {}",
            tensors.len(),
            slots.len()
        )));
    }
    for ((name, slot), (got_name, t)) in slots.iter_mut().zip(tensors) {
        if *name != got_name || slot.shape() != t.shape() {
            return Err(Error::Format(format!(
                "{what}: expected '{name}' {:?}, found '{got_name}' {:?}",
                slot.shape(),
                t.shape()
            )));
        }
        **slot = t;
    }
    Ok(())
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<GanCheckpoint<f32>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::NotCheckpoint);
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = r.u32("format version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let rows = r.u32("architecture")? as usize;
    let cols = r.u32("architecture")? as usize;
    let latent_dim = r.u32("architecture")? as usize;
    let leak = f64::from_bits(r.u64("architecture")?);
    let arch = GanArch {
        latent_dim,
        rows,
        cols,
        leak,
    };
    arch.validate()?;
    let class_label = ClassLabel::from_index(r.u8("metadata")? as usize)?;
    let epochs_completed = r.u32("metadata")?;
    let seed = r.u64("metadata")?;

    let mut generator = build_generator::<f32>(&arch, 0)?;
    fill(&mut generator, r.tensors("generator")?, "generator")?;
    let training = match r.u8("training flag")? {
        0 => None,
        1 => {
            let mut critic = build_critic::<f32>(&arch, 0)?;
            fill(&mut critic, r.tensors("critic")?, "critic")?;
            let critic_opt = r.adam("critic_opt", &critic.params())?;
            let gen_opt = r.adam("gen_opt", &generator.params())?;
            Some(TrainingState {
                critic,
                critic_opt,
                gen_opt,
            })
        }
        f => return Err(Error::Format(format!("training flag {f} is not 0 or 1"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(GanCheckpoint {
        format_version: version,
        arch,
        generator,
        training,
        class_label,
        epochs_completed,
        seed,
    })
}

pub fn save_checkpoint(ckpt: &GanCheckpoint<f32>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, checkpoint_to_bytes(ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GanCheckpoint<f32>> {
    checkpoint_from_bytes(&fs::read(path)?)
}
