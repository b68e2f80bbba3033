//! Little-endian binary checkpoints: network layout, method, schedule,
//! parameters and optimizer state.

use std::path::Path;

use mfdiff::net::optim::{AdamConfig, Optimizer};
use mfdiff::{Method, NoiseSchedule, ScoreModel, TimeInput};

use crate::error::{io_err, LabError, Result};

const MAGIC: &[u8; 8] = b"MFDCKPT\0";
const VERSION: u32 = 1;

pub struct Checkpoint {
    pub model: ScoreModel,
    pub optimizer: Optimizer,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|x| self.f64(*x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or("truncated checkpoint")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> std::result::Result<usize, String> {
        let n = self.u64()? as usize;
        if n > (self.buf.len() - self.pos) / 8 {
            return Err("length field exceeds file size".into());
        }
        Ok(n)
    }
    fn f64s(&mut self) -> std::result::Result<Vec<f64>, String> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn encode(model: &ScoreModel, opt: &Optimizer) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    w.u64(model.dims().len() as u64);
    model.dims().iter().for_each(|d| w.u64(*d as u64));
    let (tag, c) = match model.training_method() {
        Method::Iso => (0, 0.0),
        Method::Niso { c } => (1, c),
        Method::Tango { c } => (2, c),
        Method::Rssm => (3, 0.0),
    };
    w.u8(tag);
    w.f64(c);
    w.u8(u8::from(model.rescale()));
    w.u8(match model.time_input() {
        TimeInput::Time => 0,
        TimeInput::Sigma => 1,
    });
    let s = model.schedule();
    [s.sigma_min(), s.sigma_max(), s.horizon()].iter().for_each(|v| w.f64(*v));
    w.f64s(model.params());
    let cfg = opt.config();
    [cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.clip.unwrap_or(-1.0), cfg.ema_decay].iter().for_each(|v| w.f64(*v));
    w.u8(u8::from(cfg.ema_warmup));
    w.u64(opt.steps());
    let (m, v) = opt.moments();
    w.f64s(m);
    w.f64s(v);
    w.f64s(opt.ema());
    w.0
}

pub fn decode(buf: &[u8]) -> std::result::Result<Checkpoint, String> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let nd = r.len()?;
    let dims = (0..nd).map(|_| r.u64().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
    let tag = r.u8()?;
    let c = r.f64()?;
    let method = match tag {
        0 => Method::Iso,
        1 => Method::Niso { c },
        2 => Method::Tango { c },
        3 => Method::Rssm,
        t => return Err(format!("unknown method tag {t}")),
    };
    let rescale = r.u8()? != 0;
    let time_input = match r.u8()? {
        0 => TimeInput::Time,
        1 => TimeInput::Sigma,
        t => return Err(format!("unknown time input tag {t}")),
    };
    let schedule = NoiseSchedule::new(r.f64()?, r.f64()?, r.f64()?).map_err(|e| e.to_string())?;
    let params = r.f64s()?;
    let model = ScoreModel::from_parts(dims, params, method, rescale, time_input, schedule).map_err(|e| e.to_string())?;
    let (lr, beta1, beta2, eps, clip, ema_decay) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let ema_warmup = r.u8()? != 0;
    let cfg = AdamConfig { lr, beta1, beta2, eps, clip: (clip >= 0.0).then_some(clip), ema_decay, ema_warmup };
    let step = r.u64()?;
    let (m, v, ema) = (r.f64s()?, r.f64s()?, r.f64s()?);
    if r.pos != buf.len() {
        return Err("trailing bytes after checkpoint".into());
    }
    let optimizer = Optimizer::from_state(cfg, m, v, ema, step).map_err(|e| e.to_string())?;
    Ok(Checkpoint { model, optimizer })
}

pub fn save(path: &Path, model: &ScoreModel, opt: &Optimizer) -> Result<()> {
    std::fs::write(path, encode(model, opt)).map_err(io_err(path))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let buf = std::fs::read(path).map_err(io_err(path))?;
    decode(&buf).map_err(|message| LabError::Format { path: path.into(), message })
}
