use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::dynamics::StepEvent;
use crate::error::{Error, Result};
use crate::smdp::{ExecutableAction, Pose};

/// One decision of a recorded episode: the pose at the decision time, the
/// command, and what happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub d: f64,
    pub tau: f64,
    pub reward: f64,
    pub event: String,
}

impl TrajectoryRow {
    pub fn new(t: f64, pose: Pose, action: &ExecutableAction, tau: f64, reward: f64, event: StepEvent) -> Self {
        Self {
            t,
            x: pose.x,
            y: pose.y,
            theta: pose.theta,
            v: action.v,
            omega: action.omega,
            d: action.d,
            tau,
            reward,
            event: event.as_str().to_string(),
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.theta)
    }

    pub fn action(&self) -> ExecutableAction {
        ExecutableAction {
            v: self.v,
            omega: self.omega,
            d: self.d,
        }
    }

    pub fn event(&self) -> Result<StepEvent> {
        StepEvent::parse(&self.event)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown event {:?}", self.event)))
    }
}

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv<R: Read>(reader: R) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let rows = r.deserialize().collect::<std::result::Result<Vec<TrajectoryRow>, _>>()?;
    for row in &rows {
        row.event()?;
    }
    Ok(rows)
}
