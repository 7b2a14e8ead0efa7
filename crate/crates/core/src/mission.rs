//! Waypoint missions and the row-by-row state machine.
//!
//! Rows are visited in order. For each row the UAV flies to the PV start
//! waypoint on GPS (`Transit`), waits there until the freshly initialised
//! midline filter has converged (`Hold`), then follows the row visually
//! (`TrackRow`) until GPS says it has covered the row length.

use serde::{Deserialize, Serialize};

use crate::ekf::MidlineState;
use crate::error::{Error, MissionRule, Result};
use crate::geometry::{Pose2D, WorldLine, WorldPoint};
use crate::linalg::Vec2;
use crate::scalar::Real;

/// Shortest accepted distance between a row's start and end, meters.
pub const MIN_ROW_LENGTH: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WaypointLabel {
    #[serde(rename = "start")]
    PvStart,
    #[serde(rename = "end")]
    PvEnd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint<T> {
    pub position: WorldPoint<T>,
    pub label: WaypointLabel,
    pub row: usize,
}

impl<T: Real> Waypoint<T> {
    pub fn start(row: usize, x: T, y: T) -> Self {
        Self { position: WorldPoint::new(x, y), label: WaypointLabel::PvStart, row }
    }

    pub fn end(row: usize, x: T, y: T) -> Self {
        Self { position: WorldPoint::new(x, y), label: WaypointLabel::PvEnd, row }
    }
}

/// Checks count, label alternation, row indices and row lengths.
pub fn validate_mission<T: Real>(wps: &[Waypoint<T>]) -> Result<()> {
    if wps.len() < 2 || !wps.len().is_multiple_of(2) {
        return Err(Error::MalformedMission(MissionRule::Count));
    }
    for pair in wps.chunks_exact(2) {
        if pair[0].label != WaypointLabel::PvStart || pair[1].label != WaypointLabel::PvEnd {
            return Err(Error::MalformedMission(MissionRule::Alternation));
        }
    }
    for (k, pair) in wps.chunks_exact(2).enumerate() {
        if pair[0].row != k || pair[1].row != k {
            return Err(Error::MalformedMission(MissionRule::RowIndex));
        }
        if pair[0].position.distance(&pair[1].position) < T::lit(MIN_ROW_LENGTH) {
            return Err(Error::MalformedMission(MissionRule::RowTooShort));
        }
    }
    Ok(())
}

/// A validated waypoint list.
#[derive(Clone, Debug, PartialEq)]
pub struct Mission<T> {
    waypoints: Vec<Waypoint<T>>,
}

impl<T: Real> Mission<T> {
    pub fn new(waypoints: Vec<Waypoint<T>>) -> Result<Self> {
        validate_mission(&waypoints)?;
        Ok(Self { waypoints })
    }

    pub fn waypoints(&self) -> &[Waypoint<T>] {
        &self.waypoints
    }

    pub fn row_count(&self) -> usize {
        self.waypoints.len() / 2
    }

    /// `(start, end)` of row `k`.
    pub fn row(&self, k: usize) -> (WorldPoint<T>, WorldPoint<T>) {
        (self.waypoints[2 * k].position, self.waypoints[2 * k + 1].position)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Transit,
    Hold,
    TrackRow,
    Done,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Transit => "transit",
            Phase::Hold => "hold",
            Phase::TrackRow => "track",
            Phase::Done => "done",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbortReason {
    /// The filter never converged while holding at the row start.
    HoldTimeout,
    /// No observation passed the gate for too long during tracking.
    NoObservations,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissionConfig<T> {
    /// Hold ends once `trace(P)` drops below this value and the vehicle is
    /// within `hold_radius` of the row start.
    pub hold_threshold: T,
    pub hold_radius: T,
    /// Distance at which a transit target counts as reached, meters.
    pub arrival_radius: T,
    /// Longest gap between accepted observations while tracking, seconds.
    pub row_timeout: T,
    /// Longest hold before the row is abandoned, seconds.
    pub hold_timeout: T,
    /// Shift later waypoints by the lateral waypoint error measured on the
    /// rows already flown.
    pub relative_transit: bool,
}

impl<T: Real> Default for MissionConfig<T> {
    fn default() -> Self {
        Self {
            hold_threshold: T::lit(0.5),
            hold_radius: T::lit(0.05),
            arrival_radius: T::one(),
            row_timeout: T::lit(5.0),
            hold_timeout: T::lit(30.0),
            relative_transit: true,
        }
    }
}

/// Mutable mission progress.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MissionState<T> {
    pub phase: Phase,
    pub row: usize,
    /// Distance covered along the current row since tracking began, meters.
    pub traveled: T,
    /// GPS position when tracking of the current row began.
    pub track_origin: Option<WorldPoint<T>>,
    /// Time the current phase was entered, seconds.
    pub phase_since: T,
    /// Time of the last accepted observation in this row.
    pub last_accepted: Option<T>,
    /// Correction added to waypoints of rows not yet flown.
    pub offset: Vec2<T>,
}

impl<T: Real> MissionState<T> {
    pub fn initial() -> Self {
        Self {
            phase: Phase::Transit,
            row: 0,
            traveled: T::zero(),
            track_origin: None,
            phase_since: T::zero(),
            last_accepted: None,
            offset: Vec2::zero(),
        }
    }

    /// Records an observation that passed the gate.
    pub fn note_accepted(&mut self, t: T) {
        self.last_accepted = Some(t);
    }
}

/// What the vehicle and filter should do after a mission step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Directive<T> {
    /// Fly to a world point on GPS.
    GoTo(WorldPoint<T>),
    /// Keep position over a world point.
    HoldAt(WorldPoint<T>),
    /// Follow the filtered midline visually.
    TrackLine,
    /// Restart the midline filter from a waypoint pair.
    ReinitEkf { start: WorldPoint<T>, end: WorldPoint<T> },
    PhaseChanged { from: Phase, to: Phase, row: usize },
    RowCompleted { row: usize, traveled: T },
    RowAborted { row: usize, reason: AbortReason },
    MissionDone,
}

/// Row `k`'s waypoint pair shifted by the current correction.
pub fn corrected_row<T: Real>(mission: &Mission<T>, state: &MissionState<T>, k: usize) -> (WorldPoint<T>, WorldPoint<T>) {
    let (s, e) = mission.row(k);
    let d = state.offset;
    (WorldPoint::new(s.x + d.x, s.y + d.y), WorldPoint::new(e.x + d.x, e.y + d.y))
}

/// Advances the state machine by one control tick at time `t` with the GPS
/// pose and the current filter estimate.
pub fn mission_step<T: Real>(
    mission: &Mission<T>,
    cfg: &MissionConfig<T>,
    state: &MissionState<T>,
    t: T,
    gps: &Pose2D<T>,
    ekf: &MidlineState<T>,
) -> (MissionState<T>, Vec<Directive<T>>) {
    let mut s = *state;
    let mut out = Vec::new();
    let here = gps.position();
    match s.phase {
        Phase::Done => out.push(Directive::MissionDone),
        Phase::Transit => {
            let (start, end) = corrected_row(mission, &s, s.row);
            if here.distance(&start) <= cfg.arrival_radius {
                enter(&mut s, Phase::Hold, t, &mut out);
                out.push(Directive::ReinitEkf { start, end });
                out.push(Directive::HoldAt(start));
            } else {
                out.push(Directive::GoTo(start));
            }
        }
        Phase::Hold => {
            let (start, _) = corrected_row(mission, &s, s.row);
            if ekf.p.trace() < cfg.hold_threshold && here.distance(&start) <= cfg.hold_radius {
                enter(&mut s, Phase::TrackRow, t, &mut out);
                s.track_origin = Some(here);
                s.traveled = T::zero();
                s.last_accepted = None;
                out.push(Directive::TrackLine);
            } else if t - s.phase_since > cfg.hold_timeout {
                out.push(Directive::RowAborted { row: s.row, reason: AbortReason::HoldTimeout });
                next_row(mission, &mut s, t, &mut out);
            } else {
                out.push(Directive::HoldAt(start));
            }
        }
        Phase::TrackRow => {
            let (start, end) = corrected_row(mission, &s, s.row);
            let length = start.distance(&end);
            let dir = (end.to_vec() - start.to_vec()).scale(T::one() / length);
            let origin = s.track_origin.unwrap_or(here);
            s.traveled = (here.to_vec() - origin.to_vec()).dot(dir);
            let silent_since = s.last_accepted.unwrap_or(s.phase_since);
            if s.traveled >= length {
                out.push(Directive::RowCompleted { row: s.row, traveled: s.traveled });
                if cfg.relative_transit {
                    // lateral waypoint error seen on this row, measured at its end
                    let foot = ekf.line.foot_of(end.x, end.y);
                    s.offset = s.offset + (foot - end.to_vec());
                }
                next_row(mission, &mut s, t, &mut out);
            } else if t - silent_since > cfg.row_timeout {
                out.push(Directive::RowAborted { row: s.row, reason: AbortReason::NoObservations });
                next_row(mission, &mut s, t, &mut out);
            } else {
                out.push(Directive::TrackLine);
            }
        }
    }
    (s, out)
}

fn enter<T: Real>(s: &mut MissionState<T>, to: Phase, t: T, out: &mut Vec<Directive<T>>) {
    out.push(Directive::PhaseChanged { from: s.phase, to, row: s.row });
    s.phase = to;
    s.phase_since = t;
}

fn next_row<T: Real>(mission: &Mission<T>, s: &mut MissionState<T>, t: T, out: &mut Vec<Directive<T>>) {
    s.track_origin = None;
    s.last_accepted = None;
    if s.row + 1 >= mission.row_count() {
        enter(s, Phase::Done, t, out);
        out.push(Directive::MissionDone);
        return;
    }
    enter(s, Phase::Transit, t, out);
    s.row += 1;
    s.traveled = T::zero();
    let (start, _) = corrected_row(mission, s, s.row);
    out.push(Directive::GoTo(start));
}

/// Owns the mission and its progress.
#[derive(Clone, Debug)]
pub struct MissionController<T> {
    mission: Mission<T>,
    cfg: MissionConfig<T>,
    state: MissionState<T>,
}

impl<T: Real> MissionController<T> {
    pub fn new(mission: Mission<T>, cfg: MissionConfig<T>) -> Self {
        Self { mission, cfg, state: MissionState::initial() }
    }

    pub fn mission(&self) -> &Mission<T> {
        &self.mission
    }

    pub fn state(&self) -> &MissionState<T> {
        &self.state
    }

    pub fn config(&self) -> &MissionConfig<T> {
        &self.cfg
    }

    pub fn note_accepted(&mut self, t: T) {
        self.state.note_accepted(t);
    }

    pub fn step(&mut self, t: T, gps: &Pose2D<T>, ekf: &MidlineState<T>) -> Vec<Directive<T>> {
        let (s, d) = mission_step(&self.mission, &self.cfg, &self.state, t, gps, ekf);
        self.state = s;
        d
    }

    /// Current row's corrected waypoint pair.
    pub fn current_row(&self) -> (WorldPoint<T>, WorldPoint<T>) {
        corrected_row(&self.mission, &self.state, self.state.row.min(self.mission.row_count() - 1))
    }

    pub fn is_done(&self) -> bool {
        self.state.phase == Phase::Done
    }
}

/// World line through a waypoint pair, if it is not perpendicular to `x`.
pub fn row_line<T: Real>(start: WorldPoint<T>, end: WorldPoint<T>) -> Result<WorldLine<T>> {
    WorldLine::through(start.x, start.y, end.x, end.y)
}
