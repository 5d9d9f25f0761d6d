//! Event study of minute-level market activity around motif trades.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::CsvHeader;
use crate::network::TradingNetwork;
use crate::powerlaw::{loglog_slope, FitRange, SlopeFit};
use crate::tape::{Aggressor, MinuteBar, Session, TradeRef, Variable, SESSION_MINUTES};

/// Half-width of an event window in minutes.
pub const HALF_WINDOW: i64 = 200;
pub const WINDOW_LEN: usize = 2 * HALF_WINDOW as usize + 1;
pub const DEFAULT_GROUP_SIZE: usize = 20;

/// One variable of one stock on a (trading day × minute) grid, days ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct MinuteGrid {
    pub stock: String,
    pub variable: Variable,
    pub days: Vec<NaiveDate>,
    /// Row-major: `values[d * SESSION_MINUTES + (minute - 1)]`.
    pub values: Vec<f64>,
}

impl MinuteGrid {
    /// Collect one variable from a stock's bars. Every day must carry all 240 minutes.
    pub fn from_bars(bars: &[MinuteBar], variable: Variable) -> Result<MinuteGrid> {
        let Some(first) = bars.first() else {
            return Err(Error::Invalid("no minute bars".into()));
        };
        let mut by_day: BTreeMap<NaiveDate, Vec<Option<f64>>> = BTreeMap::new();
        for bar in bars {
            if bar.stock != first.stock {
                return Err(Error::Invalid(format!(
                    "bars mix stocks {} and {}",
                    first.stock, bar.stock
                )));
            }
            if !(1..=SESSION_MINUTES).contains(&bar.minute) {
                return Err(Error::Invalid(format!(
                    "minute {} out of session",
                    bar.minute
                )));
            }
            let row = by_day
                .entry(bar.day)
                .or_insert_with(|| vec![None; SESSION_MINUTES]);
            row[bar.minute - 1] = Some(bar.value(variable));
        }
        let mut values = Vec::with_capacity(by_day.len() * SESSION_MINUTES);
        for (day, row) in &by_day {
            for (i, v) in row.iter().enumerate() {
                values.push(v.ok_or_else(|| {
                    Error::Invalid(format!(
                        "{} {day}: missing bar for minute {}",
                        first.stock,
                        i + 1
                    ))
                })?);
            }
        }
        Ok(MinuteGrid {
            stock: first.stock.clone(),
            variable,
            days: by_day.into_keys().collect(),
            values,
        })
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn get(&self, day_index: usize, minute: usize) -> f64 {
        self.values[day_index * SESSION_MINUTES + minute - 1]
    }

    pub fn day_index(&self, day: NaiveDate) -> Option<usize> {
        self.days.binary_search(&day).ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntradayPattern {
    pub stock: String,
    pub variable: Variable,
    /// Mean over days for minutes 1..=240.
    pub values: Vec<f64>,
    pub n_days: usize,
}

pub fn intraday_pattern(grid: &MinuteGrid) -> IntradayPattern {
    let mut values = vec![0.0; SESSION_MINUTES];
    for row in grid.values.chunks_exact(SESSION_MINUTES) {
        for (acc, v) in values.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let n = grid.n_days().max(1) as f64;
    values.iter_mut().for_each(|v| *v /= n);
    IntradayPattern {
        stock: grid.stock.clone(),
        variable: grid.variable,
        values,
        n_days: grid.n_days(),
    }
}

/// Divide every minute by its intraday mean; minutes whose mean is zero become 1.
pub fn deseasonalize(grid: &MinuteGrid, pattern: &IntradayPattern) -> MinuteGrid {
    let values = grid
        .values
        .chunks_exact(SESSION_MINUTES)
        .flat_map(|row| {
            row.iter()
                .zip(&pattern.values)
                .map(|(&x, &mean)| if mean == 0.0 { 1.0 } else { x / mean })
        })
        .collect();
    MinuteGrid {
        values,
        ..grid.clone()
    }
}

/// A motif trade considered as an event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRef {
    pub stock: String,
    pub day: NaiveDate,
    pub minute: usize,
    pub trade: TradeRef,
    pub timestamp_ms: u32,
    pub size: u64,
    /// Trade size over the stock's mean trade size.
    pub normalized_size: f64,
    pub aggressor: Aggressor,
}

/// Events for the given edges of a stock's network. Sizes are normalized by the mean
/// size over every edge of the network.
pub fn motif_events(
    stock: &str,
    net: &TradingNetwork,
    edges: &[usize],
    session: Session,
) -> Vec<EventRef> {
    let all = net.edges();
    if all.is_empty() {
        return Vec::new();
    }
    let mean_size = all.iter().map(|e| e.size as f64).sum::<f64>() / all.len() as f64;
    edges
        .iter()
        .map(|&i| {
            let e = &all[i];
            EventRef {
                stock: stock.to_owned(),
                day: e.trade.day,
                minute: session.minute_of(e.timestamp_ms),
                trade: e.trade,
                timestamp_ms: e.timestamp_ms,
                size: e.size,
                normalized_size: e.size as f64 / mean_size,
                aggressor: e.aggressor,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeGroup {
    L,
    M,
    S,
}

impl SizeGroup {
    pub const ALL: [SizeGroup; 3] = [SizeGroup::L, SizeGroup::M, SizeGroup::S];
}

impl fmt::Display for SizeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Which trade initiators an analysis keeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideFilter {
    Buyer,
    Seller,
    #[default]
    Both,
}

impl SideFilter {
    pub fn admits(self, aggressor: Aggressor) -> bool {
        match self {
            SideFilter::Both => true,
            SideFilter::Buyer => aggressor == Aggressor::Buyer,
            SideFilter::Seller => aggressor == Aggressor::Seller,
        }
    }
}

impl FromStr for SideFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "buyer" => Ok(SideFilter::Buyer),
            "seller" => Ok(SideFilter::Seller),
            "both" => Ok(SideFilter::Both),
            _ => Err(Error::Usage(format!(
                "unknown side {s:?} (expected buyer, seller or both)"
            ))),
        }
    }
}

/// Visiting order over a list sorted by size, descending.
fn scan_order(n: usize, group: SizeGroup) -> Box<dyn Iterator<Item = usize>> {
    match group {
        SizeGroup::L => Box::new(0..n),
        SizeGroup::S => Box::new((0..n).rev()),
        SizeGroup::M => {
            let m = n.saturating_sub(1) / 2;
            Box::new((0..2 * n).filter_map(move |k| {
                let off = k.div_ceil(2);
                if k % 2 == 1 {
                    m.checked_sub(off)
                } else {
                    Some(m + off).filter(|&i| i < n)
                }
            }))
        }
    }
}

/// Greedy size-group selection: at most `group_size` events, no two on the same day.
/// Events are ranked by size descending, then by (day, trade sequence).
pub fn select_events(events: &[EventRef], group: SizeGroup, group_size: usize) -> Vec<EventRef> {
    let mut ranked: Vec<&EventRef> = events.iter().collect();
    ranked.sort_by(|a, b| b.size.cmp(&a.size).then_with(|| a.trade.cmp(&b.trade)));
    let mut days = std::collections::HashSet::new();
    let mut chosen = Vec::new();
    for i in scan_order(ranked.len(), group) {
        if chosen.len() == group_size {
            break;
        }
        if days.insert(ranked[i].day) {
            chosen.push(ranked[i].clone());
        }
    }
    if chosen.is_empty() {
        log::warn!("no eligible events for group {group}");
    }
    chosen
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventWindow {
    pub event: EventRef,
    pub variable: Variable,
    /// Deseasonalized values for t = −200..=200.
    pub trajectory: Vec<f64>,
}

/// The ±200-minute trajectory around an event, continuing into adjacent trading days.
/// `None` when the window runs past either end of the stock's calendar.
pub fn extract_window(series: &MinuteGrid, event: &EventRef) -> Option<EventWindow> {
    let d = series.day_index(event.day)?;
    let center = (d * SESSION_MINUTES + event.minute - 1) as i64;
    let (lo, hi) = (center - HALF_WINDOW, center + HALF_WINDOW);
    if lo < 0 || hi >= series.values.len() as i64 {
        return None;
    }
    Some(EventWindow {
        event: event.clone(),
        variable: series.variable,
        trajectory: series.values[lo as usize..=hi as usize].to_vec(),
    })
}

/// Pointwise mean of equally long windows.
pub fn group_average(windows: &[EventWindow]) -> Result<Vec<f64>> {
    let first = windows
        .first()
        .ok_or_else(|| Error::EmptyGroup("no windows to average".into()))?;
    let mut mean = vec![0.0; first.trajectory.len()];
    for w in windows {
        if w.trajectory.len() != mean.len() || w.variable != first.variable {
            return Err(Error::Invalid(
                "windows differ in length or variable".into(),
            ));
        }
        for (m, v) in mean.iter_mut().zip(&w.trajectory) {
            *m += v;
        }
    }
    let n = windows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub pre: SlopeFit,
    pub post: SlopeFit,
}

/// Decay exponents of a mean trajectory before (reflected) and after the event.
pub fn event_dynamics_exponents(mean: &[f64], range: FitRange) -> Result<Dynamics> {
    if mean.len() != WINDOW_LEN {
        return Err(Error::Invalid(format!(
            "trajectory has {} points, expected {WINDOW_LEN}",
            mean.len()
        )));
    }
    if range.hi > HALF_WINDOW {
        return Err(Error::Usage(format!(
            "fit range {range} exceeds the ±{HALF_WINDOW} window"
        )));
    }
    let center = HALF_WINDOW as usize;
    let pre: Vec<(i64, f64)> = (1..=HALF_WINDOW)
        .map(|t| (t, mean[center - t as usize]))
        .collect();
    let post: Vec<(i64, f64)> = (1..=HALF_WINDOW)
        .map(|t| (t, mean[center + t as usize]))
        .collect();
    Ok(Dynamics {
        pre: loglog_slope(&pre, range)?,
        post: loglog_slope(&post, range)?,
    })
}

/// Inputs of one stock for the event study.
#[derive(Clone, Debug)]
pub struct StockEvents {
    pub bars: Vec<MinuteBar>,
    pub events: Vec<EventRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventStudyConfig {
    pub variables: Vec<Variable>,
    pub group_size: usize,
    pub fit_range: FitRange,
    pub side: SideFilter,
}

impl Default for EventStudyConfig {
    fn default() -> Self {
        EventStudyConfig {
            variables: Variable::ALL.to_vec(),
            group_size: DEFAULT_GROUP_SIZE,
            fit_range: FitRange::default(),
            side: SideFilter::Both,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub group: SizeGroup,
    pub variable: Variable,
    pub n_events: usize,
    /// Selected events dropped because their window left the calendar.
    pub n_unavailable: usize,
    pub mean_normalized_size: Option<f64>,
    /// Mean trajectory for t = −200..=200; empty when no window was available.
    pub trajectory: Vec<f64>,
    pub beta_pre: Option<f64>,
    pub beta_pre_stderr: Option<f64>,
    pub beta_post: Option<f64>,
    pub beta_post_stderr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventStudyReport {
    pub fit_range: FitRange,
    pub group_size: usize,
    pub side: SideFilter,
    pub n_stocks: usize,
    pub groups: Vec<GroupResult>,
}

impl EventStudyReport {
    pub fn group(&self, group: SizeGroup, variable: Variable) -> Option<&GroupResult> {
        self.groups
            .iter()
            .find(|g| g.group == group && g.variable == variable)
    }

    pub fn trajectory_rows(&self) -> Vec<TrajectoryRow> {
        self.groups
            .iter()
            .flat_map(|g| {
                g.trajectory
                    .iter()
                    .enumerate()
                    .map(move |(i, &value)| TrajectoryRow {
                        group: g.group,
                        variable: g.variable,
                        t: i as i64 - HALF_WINDOW,
                        value,
                    })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub group: SizeGroup,
    pub variable: Variable,
    pub t: i64,
    pub value: f64,
}

impl CsvHeader for TrajectoryRow {
    const HEADER: &'static [&'static str] = &["group", "variable", "t", "value"];
}

/// Windows of one stock for every (group, variable) cell, plus unavailable counts.
fn stock_windows(
    stock: &StockEvents,
    config: &EventStudyConfig,
) -> Result<BTreeMap<(SizeGroup, Variable), (Vec<EventWindow>, usize)>> {
    let mut out = BTreeMap::new();
    if stock.bars.is_empty() {
        return Ok(out);
    }
    let events: Vec<EventRef> = stock
        .events
        .iter()
        .filter(|e| config.side.admits(e.aggressor))
        .cloned()
        .collect();
    let selections: Vec<(SizeGroup, Vec<EventRef>)> = SizeGroup::ALL
        .iter()
        .map(|&g| (g, select_events(&events, g, config.group_size)))
        .collect();
    for &variable in &config.variables {
        let grid = MinuteGrid::from_bars(&stock.bars, variable)?;
        let series = deseasonalize(&grid, &intraday_pattern(&grid));
        for (group, chosen) in &selections {
            let windows: Vec<EventWindow> = chosen
                .iter()
                .filter_map(|e| extract_window(&series, e))
                .collect();
            let unavailable = chosen.len() - windows.len();
            if unavailable > 0 && variable == config.variables[0] {
                log::warn!(
                    "{}: {unavailable} {group} events lack a full window",
                    grid.stock
                );
            }
            out.insert((*group, variable), (windows, unavailable));
        }
    }
    Ok(out)
}

/// Pool selected events of every stock into one group per size class and variable.
pub fn event_study(stocks: &[StockEvents], config: &EventStudyConfig) -> Result<EventStudyReport> {
    use rayon::prelude::*;
    let per_stock: Vec<_> = stocks
        .par_iter()
        .map(|s| stock_windows(s, config))
        .collect::<Result<_>>()?;
    let mut groups = Vec::new();
    for group in SizeGroup::ALL {
        for &variable in &config.variables {
            let mut windows = Vec::new();
            let mut n_unavailable = 0;
            for cells in &per_stock {
                if let Some((w, u)) = cells.get(&(group, variable)) {
                    windows.extend(w.iter().cloned());
                    n_unavailable += u;
                }
            }
            groups.push(group_result(
                group,
                variable,
                &windows,
                n_unavailable,
                config.fit_range,
            ));
        }
    }
    Ok(EventStudyReport {
        fit_range: config.fit_range,
        group_size: config.group_size,
        side: config.side,
        n_stocks: stocks.len(),
        groups,
    })
}

fn group_result(
    group: SizeGroup,
    variable: Variable,
    windows: &[EventWindow],
    n_unavailable: usize,
    range: FitRange,
) -> GroupResult {
    let n = windows.len();
    let mut result = GroupResult {
        group,
        variable,
        n_events: n,
        n_unavailable,
        mean_normalized_size: (n > 0)
            .then(|| windows.iter().map(|w| w.event.normalized_size).sum::<f64>() / n as f64),
        trajectory: Vec::new(),
        beta_pre: None,
        beta_pre_stderr: None,
        beta_post: None,
        beta_post_stderr: None,
        note: None,
    };
    match group_average(windows) {
        Err(e) => result.note = Some(e.to_string()),
        Ok(mean) => {
            match event_dynamics_exponents(&mean, range) {
                Ok(d) => {
                    result.beta_pre = Some(d.pre.beta);
                    result.beta_pre_stderr = Some(d.pre.stderr);
                    result.beta_post = Some(d.post.beta);
                    result.beta_post_stderr = Some(d.post.stderr);
                }
                Err(e) => result.note = Some(e.to_string()),
            }
            result.trajectory = mean;
        }
    }
    result
}
