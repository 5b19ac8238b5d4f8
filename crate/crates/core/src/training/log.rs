use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use super::step::StepLosses;
use crate::error::Result;

#[derive(Serialize)]
struct StepRecord {
    step: u64,
    loss_disc: f64,
    loss_gen: f64,
    wall_clock: f64,
}

/// Line-delimited JSON stream of step losses; `wall_clock` is seconds since creation.
pub struct StepLogger<W: Write> {
    out: W,
    start: Instant,
}

impl<W: Write> StepLogger<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            start: Instant::now(),
        }
    }

    pub fn log(&mut self, losses: &StepLosses) -> Result<()> {
        let rec = StepRecord {
            step: losses.step,
            loss_disc: losses.loss_disc,
            loss_gen: losses.loss_gen,
            wall_clock: self.start.elapsed().as_secs_f64(),
        };
        serde_json::to_writer(&mut self.out, &rec)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
