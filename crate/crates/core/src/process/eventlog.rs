//! Event-log persistence: a little-endian binary format and JSON lines.

use std::io::{BufRead, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"STIR";
const VERSION: u16 = 1;

/// One executed exchange: `α` moved from `x` to `x+1`, `β` the other way.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Macroscopic time.
    pub t: f64,
    pub x: u32,
    pub alpha: u8,
    pub beta: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub n_sites: u32,
    pub n_species: u8,
    pub horizon: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventLog {
    pub header: LogHeader,
    pub events: Vec<Event>,
}

impl EventLog {
    /// Binary layout: `"STIR"`, version `u16`, `N u32`, `n u8`, `T f64`,
    /// `seed u64`, event count `u64`, then `(t f64, x u32, α u8, β u8)` records.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u16::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(self.header.n_sites)?;
        w.write_u8(self.header.n_species)?;
        w.write_f64::<LittleEndian>(self.header.horizon)?;
        w.write_u64::<LittleEndian>(self.header.seed)?;
        w.write_u64::<LittleEndian>(self.events.len() as u64)?;
        for e in &self.events {
            w.write_f64::<LittleEndian>(e.t)?;
            w.write_u32::<LittleEndian>(e.x)?;
            w.write_u8(e.alpha)?;
            w.write_u8(e.beta)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad event-log magic".into()));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported event-log version {version}")));
        }
        let header = LogHeader {
            n_sites: r.read_u32::<LittleEndian>()?,
            n_species: r.read_u8()?,
            horizon: r.read_f64::<LittleEndian>()?,
            seed: r.read_u64::<LittleEndian>()?,
        };
        let count = r.read_u64::<LittleEndian>()? as usize;
        let mut events = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            events.push(Event {
                t: r.read_f64::<LittleEndian>()?,
                x: r.read_u32::<LittleEndian>()?,
                alpha: r.read_u8()?,
                beta: r.read_u8()?,
            });
        }
        Ok(Self { header, events })
    }

    /// First line is the header object, then one event object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| Error::Format("empty event log".into()))??;
        let header: LogHeader = serde_json::from_str(&first)?;
        let mut events = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line)?);
        }
        Ok(Self { header, events })
    }
}
