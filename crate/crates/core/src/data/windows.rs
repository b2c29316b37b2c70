use super::{DataError, PreparedSeries};
use crate::tensor::Tensor;

/// A batch of windows with their within-window first differences.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowBatch {
    /// `L × d` original values per window.
    pub windows: Vec<Tensor>,
    /// `(L−1) × d` differenced values per window.
    pub diff_windows: Vec<Tensor>,
    /// Position of each window's first timestamp in the source series.
    pub start_indices: Vec<usize>,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Windows starting at `starts`, differenced according to how `series` was prepared.
    pub fn from_starts(
        series: &PreparedSeries,
        starts: &[usize],
        window: usize,
    ) -> Result<Self, DataError> {
        let len = series.len();
        if window < 2 {
            return Err(DataError::InvalidWindowing(format!(
                "window length {window} leaves nothing to difference"
            )));
        }
        let mut windows = Vec::with_capacity(starts.len());
        let mut diff_windows = Vec::with_capacity(starts.len());
        for &start in starts {
            if start + window > len {
                return Err(DataError::WindowTooLarge {
                    window: start + window,
                    len,
                });
            }
            let w = slice_time_major(&series.original, start, window);
            let dw = match &series.differenced {
                None => within_window_diff(&w),
                Some(diff) => slice_time_major(diff, start, window - 1),
            };
            windows.push(w);
            diff_windows.push(dw);
        }
        Ok(Self {
            windows,
            diff_windows,
            start_indices: starts.to_vec(),
        })
    }
}

fn slice_time_major(x: &[Vec<f64>], start: usize, len: usize) -> Tensor {
    let d = x.len();
    let mut data = Vec::with_capacity(len * d);
    for t in start..start + len {
        data.extend(x.iter().map(|v| v[t]));
    }
    Tensor::new(vec![len, d], data).expect("window shape")
}

fn within_window_diff(w: &Tensor) -> Tensor {
    let (l, d) = (w.rows(), w.cols());
    let data = w.data();
    let mut out = Vec::with_capacity((l - 1) * d);
    for t in 0..l - 1 {
        for v in 0..d {
            out.push(data[(t + 1) * d + v] - data[t * d + v]);
        }
    }
    Tensor::new(vec![l - 1, d], out).expect("diff window shape")
}

/// Starts `0, stride, 2·stride, …` up to `len − window`, plus a right-aligned
/// window at `len − window` when the last regular window leaves a remainder.
pub fn window_starts(len: usize, window: usize, stride: usize) -> Result<Vec<usize>, DataError> {
    if window == 0 {
        return Err(DataError::InvalidWindowing(
            "window length must be ≥ 1".into(),
        ));
    }
    if stride == 0 {
        return Err(DataError::InvalidWindowing("stride must be ≥ 1".into()));
    }
    if window > len {
        return Err(DataError::WindowTooLarge { window, len });
    }
    let last = len - window;
    let mut starts: Vec<usize> = (0..=last).step_by(stride).collect();
    if starts.last() != Some(&last) {
        starts.push(last);
    }
    Ok(starts)
}

/// Non-overlapping scoring windows covering every timestamp exactly once once
/// the tail window's overlap is discarded.
pub fn scoring_starts(len: usize, window: usize) -> Result<Vec<usize>, DataError> {
    window_starts(len, window, window)
}

/// Windows over a raw `d × T` matrix, differenced within each window.
pub fn make_windows(
    x: &[Vec<f64>],
    window: usize,
    stride: usize,
) -> Result<WindowBatch, DataError> {
    let len = x.first().map_or(0, Vec::len);
    let starts = window_starts(len, window, stride)?;
    let series = PreparedSeries {
        original: x.to_vec(),
        differenced: None,
    };
    WindowBatch::from_starts(&series, &starts, window)
}
