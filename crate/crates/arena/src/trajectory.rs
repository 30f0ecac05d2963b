//! Per-step trajectory dumps for replay and plotting.

use std::io::Write;

use cmdp_core::error::{Error, Result};

use crate::arena::{MiniArena, ACTION_DIM};

/// Streams one CSV row per environment step:
/// `episode, t, x, y, vx, vy, heading, energy, goal_x, goal_y, a0..a3, reward, <events>…, terminal, truncated`.
pub struct TrajectoryWriter<W: Write> {
    out: csv::Writer<W>,
    events: usize,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(out: W, event_names: &[String]) -> Result<Self> {
        let mut out = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "episode", "t", "x", "y", "vx", "vy", "heading", "energy", "goal_x", "goal_y",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..ACTION_DIM).map(|i| format!("a{i}")));
        header.push("reward".into());
        header.extend(event_names.iter().cloned());
        header.extend(["terminal".into(), "truncated".into()]);
        out.write_record(&header).map_err(csv_err)?;
        Ok(Self {
            out,
            events: event_names.len(),
        })
    }

    /// Records the arena state after a step together with the step's action and outcome.
    pub fn record(
        &mut self,
        episode: usize,
        arena: &MiniArena,
        action: &[f64],
        outcome: &cmdp_core::StepOutcome,
    ) -> Result<()> {
        assert_eq!(outcome.events.len(), self.events, "event arity");
        let s = arena.state();
        let mut row = vec![episode.to_string(), s.step.to_string()];
        let nums = [
            s.position[0],
            s.position[1],
            s.velocity[0],
            s.velocity[1],
            s.heading,
            s.energy,
            s.goal[0],
            s.goal[1],
        ];
        row.extend(
            nums.iter()
                .chain(action)
                .chain(std::iter::once(&outcome.reward))
                .map(|v| format!("{v:e}")),
        );
        row.extend(outcome.events.iter().map(|e| e.to_string()));
        row.push(u8::from(outcome.terminal).to_string());
        row.push(u8::from(outcome.truncated).to_string());
        self.out.write_record(&row).map_err(csv_err)
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        self.out.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}
