//! Artifacts shared between commands: answer keys, recordings, calibrations
//! and reconstructed poses.

use std::io::Write;
use std::path::Path;

use handcal::acquisition::{ingest, read_recording, FrameSet, IngestOutput, SyncConfig};
use handcal::diffhcal::{
    load_calibration, reconstruct_frames, CalibrationError, SessionCalibration,
};
use handcal::glove_sim::{Scenario, SensorExtrinsics, Trajectory, TrajectoryFrame};
use handcal::hand_model::{HandModel, PoseParams, ShapeParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Version of every JSON document the CLI writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Everything that generated a simulated recording.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerKey {
    pub schema_version: u32,
    pub model_hash: String,
    pub scenario: Scenario,
    pub beta: ShapeParams,
    pub extrinsics: SensorExtrinsics,
    pub trajectory: Trajectory,
}

impl AnswerKey {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let key: AnswerKey = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("answer key {}: {e}", path.display())))?;
        if key.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "answer key {}: unsupported schema version {}",
                path.display(),
                key.schema_version
            )));
        }
        Ok(key)
    }

    /// Trajectory frame a synchronized frame was sampled from. Frame times
    /// carry the clock-correction error, so anything within half a period
    /// of a trajectory tick counts.
    pub fn frame_at(&self, t: u64) -> Option<&TrajectoryFrame> {
        let period = self.trajectory.period_ns();
        let first = self.trajectory.frames.first()?.timestamp_ns;
        let k = ((t as f64 - first as f64) / period as f64).round();
        if k < 0.0 {
            return None;
        }
        let frame = self.trajectory.frames.get(k as usize)?;
        (2 * frame.timestamp_ns.abs_diff(t) < period).then_some(frame)
    }
}

pub fn load_frames(path: &Path, sync: SyncConfig) -> CliResult<IngestOutput> {
    let packets =
        read_recording(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(ingest(&packets, sync))
}

fn calibration_error(e: CalibrationError) -> CliError {
    match e {
        CalibrationError::ModelHashMismatch { .. }
        | CalibrationError::Invalid(_)
        | CalibrationError::Io(_) => CliError::config(e.to_string()),
        other => CliError::data(other.to_string()),
    }
}

pub fn load_session_calibration(path: &Path, model: &HandModel) -> CliResult<SessionCalibration> {
    load_calibration(path, model).map_err(calibration_error)
}

pub fn reconstruct(
    model: &HandModel,
    frames: &[FrameSet],
    cal: &SessionCalibration,
) -> CliResult<Vec<PoseParams>> {
    reconstruct_frames(model, frames, cal).map_err(|e| CliError::data(e.to_string()))
}

pub fn solver_error(e: CalibrationError) -> CliError {
    CliError::data(e.to_string())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

/// Single-line JSON, for the large per-frame documents.
pub fn write_json_compact<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string(value).map_err(|e| CliError::data(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

/// One JSON document per line on stdout.
pub fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string(value).map_err(|e| CliError::data(e.to_string()))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}")
        .and_then(|_| out.flush())
        .map_err(|e| CliError::data(format!("stdout: {e}")))
}
