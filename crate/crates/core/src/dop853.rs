//! Dormand–Prince 8(5,3) explicit Runge–Kutta pair with adaptive step control.
//!
//! The driver lands exactly on a uniform grid of output times instead of
//! interpolating, so sampled states carry the full local accuracy of the method.

use crate::scalar::Scalar;

const C2: f64 = 0.526001519587677318785587544488e-1;
const C3: f64 = 0.789002279381515978178381316732e-1;
const C4: f64 = 0.118350341907227396726757197510;
const C5: f64 = 0.281649658092772603273242802490;
const C6: f64 = 0.333333333333333333333333333333;
const C7: f64 = 0.25;
const C8: f64 = 0.307692307692307692307692307692;
const C9: f64 = 0.651282051282051282051282051282;
const C10: f64 = 0.6;
const C11: f64 = 0.857142857142857142857142857142;

const A21: f64 = 5.26001519587677318785587544488e-2;
const A31: f64 = 1.97250569845378994544595329183e-2;
const A32: f64 = 5.91751709536136983633785987549e-2;
const A41: f64 = 2.95875854768068491816892993775e-2;
const A43: f64 = 8.87627564304205475450678981324e-2;
const A51: f64 = 2.41365134159266685502369798665e-1;
const A53: f64 = -8.84549479328286085344864962717e-1;
const A54: f64 = 9.24834003261792003115737966543e-1;
const A61: f64 = 3.7037037037037037037037037037e-2;
const A64: f64 = 1.70828608729473871279604482173e-1;
const A65: f64 = 1.25467687566822425016691814123e-1;
const A71: f64 = 3.7109375e-2;
const A74: f64 = 1.70252211019544039314978060272e-1;
const A75: f64 = 6.02165389804559606850219397283e-2;
const A76: f64 = -1.7578125e-2;
const A81: f64 = 3.70920001185047927108779319836e-2;
const A84: f64 = 1.70383925712239993810214054705e-1;
const A85: f64 = 1.07262030446373284651809199168e-1;
const A86: f64 = -1.53194377486244017527936158236e-2;
const A87: f64 = 8.27378916381402288758473766002e-3;
const A91: f64 = 6.24110958716075717114429577812e-1;
const A94: f64 = -3.36089262944694129406857109825;
const A95: f64 = -8.68219346841726006818189891453e-1;
const A96: f64 = 2.75920996994467083049415600797e1;
const A97: f64 = 2.01540675504778934086186788979e1;
const A98: f64 = -4.34898841810699588477366255144e1;
const A101: f64 = 4.77662536438264365890433908527e-1;
const A104: f64 = -2.48811461997166764192642586468;
const A105: f64 = -5.90290826836842996371446475743e-1;
const A106: f64 = 2.12300514481811942347288949897e1;
const A107: f64 = 1.52792336328824235832596922938e1;
const A108: f64 = -3.32882109689848629194453265587e1;
const A109: f64 = -2.03312017085086261358222928593e-2;
const A111: f64 = -9.3714243008598732571704021658e-1;
const A114: f64 = 5.18637242884406370830023853209;
const A115: f64 = 1.09143734899672957818500254654;
const A116: f64 = -8.14978701074692612513997267357;
const A117: f64 = -1.85200656599969598641566180701e1;
const A118: f64 = 2.27394870993505042818970056734e1;
const A119: f64 = 2.49360555267965238987089396762;
const A1110: f64 = -3.0467644718982195003823669022;
const A121: f64 = 2.27331014751653820792359768449;
const A124: f64 = -1.05344954667372501984066689879e1;
const A125: f64 = -2.00087205822486249909675718444;
const A126: f64 = -1.79589318631187989172765950534e1;
const A127: f64 = 2.79488845294199600508499808837e1;
const A128: f64 = -2.85899827713502369474065508674;
const A129: f64 = -8.87285693353062954433549289258;
const A1210: f64 = 1.23605671757943030647266201528e1;
const A1211: f64 = 6.43392746015763530355970484046e-1;

const B1: f64 = 5.42937341165687622380535766363e-2;
const B6: f64 = 4.45031289275240888144113950566;
const B7: f64 = 1.89151789931450038304281599044;
const B8: f64 = -5.8012039600105847814672114227;
const B9: f64 = 3.1116436695781989440891606237e-1;
const B10: f64 = -1.52160949662516078556178806805e-1;
const B11: f64 = 2.01365400804030348374776537501e-1;
const B12: f64 = 4.47106157277725905176885569043e-2;

const BHH1: f64 = 0.244094488188976377952755905512;
const BHH2: f64 = 0.733846688281611857341361741547;
const BHH3: f64 = 0.220588235294117647058823529412e-1;

const ER1: f64 = 0.1312004499419488073250102996e-1;
const ER6: f64 = -0.1225156446376204440720569753e1;
const ER7: f64 = -0.4957589496572501915214079952;
const ER8: f64 = 0.1664377182454986536961530415e1;
const ER9: f64 = -0.3503288487499736816886487290;
const ER10: f64 = 0.3341791187130174790297318841;
const ER11: f64 = 0.8192320648511571246570742613e-1;
const ER12: f64 = -0.2235530786388629525884427845e-1;

/// Stage rows: node and the nonzero `(stage, coefficient)` entries.
pub(crate) const STAGES: [(f64, &[(usize, f64)]); 11] = [
    (C2, &[(0, A21)]),
    (C3, &[(0, A31), (1, A32)]),
    (C4, &[(0, A41), (2, A43)]),
    (C5, &[(0, A51), (2, A53), (3, A54)]),
    (C6, &[(0, A61), (3, A64), (4, A65)]),
    (C7, &[(0, A71), (3, A74), (4, A75), (5, A76)]),
    (C8, &[(0, A81), (3, A84), (4, A85), (5, A86), (6, A87)]),
    (C9, &[(0, A91), (3, A94), (4, A95), (5, A96), (6, A97), (7, A98)]),
    (C10, &[(0, A101), (3, A104), (4, A105), (5, A106), (6, A107), (7, A108), (8, A109)]),
    (C11, &[(0, A111), (3, A114), (4, A115), (5, A116), (6, A117), (7, A118), (8, A119), (9, A1110)]),
    (1.0, &[(0, A121), (3, A124), (4, A125), (5, A126), (6, A127), (7, A128), (8, A129), (9, A1210), (10, A1211)]),
];

/// Eighth-order weights over stages 0..12.
pub(crate) const WEIGHTS: [(usize, f64); 8] = [
    (0, B1),
    (5, B6),
    (6, B7),
    (7, B8),
    (8, B9),
    (9, B10),
    (10, B11),
    (11, B12),
];

const ERR5: [(usize, f64); 8] = [
    (0, ER1),
    (5, ER6),
    (6, ER7),
    (7, ER8),
    (8, ER9),
    (9, ER10),
    (10, ER11),
    (11, ER12),
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.333;
const FAC_MAX: f64 = 6.0;
const MAX_STEPS: usize = 20_000_000;

/// Error-control and step-size settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl<S> {
    pub rel_tol: S,
    pub abs_tol: S,
    pub max_step: S,
}

/// Why a sampled solve stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum SolveOutcome<E> {
    Completed,
    /// An accepted state was refused by the admissibility check or the right-hand side.
    Refused(E),
    /// The step size fell below the resolution of the time axis.
    StepUnderflow,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct SampledSolution<S, E> {
    pub times: Vec<S>,
    pub states: Vec<Vec<S>>,
    pub outcome: SolveOutcome<E>,
    pub stats: StepStats,
    /// Last accepted point, which need not be on the sample grid.
    pub final_time: S,
    pub final_state: Vec<S>,
}

/// Output grid `t0 + k dt` strictly below `t_end`, followed by `t_end`.
pub fn sample_times<S: Scalar>(t0: S, t_end: S, dt: S) -> Vec<S> {
    let mut times = vec![t0];
    let slack = dt * S::lit(1e-9);
    let mut k = 1usize;
    loop {
        let t = t0 + S::from_count(k) * dt;
        if t >= t_end - slack {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(t_end);
    times
}

struct Workspace<S> {
    k: Vec<Vec<S>>,
    stage: Vec<S>,
    y_new: Vec<S>,
}

impl<S: Scalar> Workspace<S> {
    fn new(len: usize) -> Self {
        Self {
            k: vec![vec![S::zero(); len]; 12],
            stage: vec![S::zero(); len],
            y_new: vec![S::zero(); len],
        }
    }
}

enum Trial {
    Done { err: f64 },
    StageRefused,
}

/// One trial step from `(t, y)` with `k[0] = f(t, y)` already filled.
/// On success `ws.y_new` holds the eighth-order solution.
fn trial_step<S, E, F>(
    rhs: &mut F,
    t: S,
    y: &[S],
    h: S,
    ctl: &StepControl<S>,
    ws: &mut Workspace<S>,
    stats: &mut StepStats,
) -> Trial
where
    S: Scalar,
    F: FnMut(S, &[S], &mut [S]) -> Result<(), E>,
{
    let len = y.len();
    for (s, (node, row)) in STAGES.iter().enumerate() {
        for c in 0..len {
            let mut acc = S::zero();
            for &(j, a) in row.iter() {
                acc += S::lit(a) * ws.k[j][c];
            }
            ws.stage[c] = y[c] + h * acc;
        }
        stats.evaluations += 1;
        if rhs(t + S::lit(*node) * h, &ws.stage, &mut ws.k[s + 1]).is_err() {
            return Trial::StageRefused;
        }
    }

    let mut err = 0.0f64;
    let mut err2 = 0.0f64;
    for c in 0..len {
        let mut slope = S::zero();
        for &(j, b) in WEIGHTS.iter() {
            slope += S::lit(b) * ws.k[j][c];
        }
        ws.y_new[c] = y[c] + h * slope;
        let sk = ctl.abs_tol + ctl.rel_tol * y[c].abs().max(ws.y_new[c].abs());
        let e3 = slope - S::lit(BHH1) * ws.k[0][c] - S::lit(BHH2) * ws.k[8][c] - S::lit(BHH3) * ws.k[11][c];
        let mut e5 = S::zero();
        for &(j, e) in ERR5.iter() {
            e5 += S::lit(e) * ws.k[j][c];
        }
        let r5 = (e5 / sk).to_f64().unwrap_or(f64::INFINITY);
        let r3 = (e3 / sk).to_f64().unwrap_or(f64::INFINITY);
        err += r5 * r5;
        err2 += r3 * r3;
    }
    let mut deno = err + 0.01 * err2;
    if deno <= 0.0 {
        deno = 1.0;
    }
    let habs = h.abs().to_f64().unwrap_or(f64::INFINITY);
    let err = habs * err * (1.0 / (deno * len as f64)).sqrt();
    Trial::Done {
        err: if err.is_nan() { f64::INFINITY } else { err },
    }
}

fn initial_step<S, E, F>(
    rhs: &mut F,
    t: S,
    y: &[S],
    f0: &[S],
    ctl: &StepControl<S>,
    stats: &mut StepStats,
) -> S
where
    S: Scalar,
    F: FnMut(S, &[S], &mut [S]) -> Result<(), E>,
{
    let len = y.len();
    let rms = |v: &dyn Fn(usize) -> S| -> S {
        let mut s = S::zero();
        for c in 0..len {
            let sk = ctl.abs_tol + ctl.rel_tol * y[c].abs();
            let x = v(c) / sk;
            s += x * x;
        }
        (s / S::from_count(len)).sqrt()
    };
    let d0 = rms(&|c| y[c]);
    let d1 = rms(&|c| f0[c]);
    let mut h0 = if d0 <= S::lit(1e-10) || d1 <= S::lit(1e-10) {
        S::lit(1e-6)
    } else {
        S::lit(0.01) * d0 / d1
    };
    h0 = h0.min(ctl.max_step);
    let y1: Vec<S> = (0..len).map(|c| y[c] + h0 * f0[c]).collect();
    let mut f1 = vec![S::zero(); len];
    stats.evaluations += 1;
    if rhs(t + h0, &y1, &mut f1).is_err() {
        return h0 * S::lit(1e-3);
    }
    let d2 = rms(&|c| f1[c] - f0[c]) / h0;
    let der = d1.max(d2);
    let h1 = if der <= S::lit(1e-15) {
        (h0 * S::lit(1e-3)).max(S::lit(1e-6))
    } else {
        (S::lit(0.01) / der).powf(S::lit(1.0 / 8.0))
    };
    (S::lit(100.0) * h0).min(h1).min(ctl.max_step)
}

/// Integrate `y' = f(t, y)` from `t0` to `t_end`, recording the state at
/// every point of the sampling grid. Steps are shortened to land exactly on
/// grid points. `rhs` may refuse a stage state by returning `Err`, which
/// rejects the trial step. `admissible` is applied to every accepted state
/// (including the initial one) and stops the solve when it fails.
pub fn solve_sampled<S, E, F, A>(
    mut rhs: F,
    mut admissible: A,
    t0: S,
    y0: &[S],
    t_end: S,
    sample_dt: S,
    ctl: StepControl<S>,
) -> SampledSolution<S, E>
where
    S: Scalar,
    F: FnMut(S, &[S], &mut [S]) -> Result<(), E>,
    A: FnMut(S, &[S]) -> Result<(), E>,
{
    let grid = sample_times(t0, t_end, sample_dt);
    let mut stats = StepStats::default();
    let mut ws = Workspace::new(y0.len());
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut times = vec![t0];
    let mut states = vec![y.clone()];

    stats.evaluations += 1;
    if let Err(e) = admissible(t, &y).and_then(|()| rhs(t, &y, &mut ws.k[0])) {
        return SampledSolution {
            times,
            states,
            outcome: SolveOutcome::Refused(e),
            stats,
            final_time: t,
            final_state: y.clone(),
        };
    }
    let f0 = ws.k[0].clone();
    let mut h = initial_step(&mut rhs, t, &y, &f0, &ctl, &mut stats);
    let mut last_rejected = false;
    let mut next = 1usize;
    let eps = S::epsilon();

    while next < grid.len() {
        if stats.accepted + stats.rejected >= MAX_STEPS {
            return SampledSolution {
                times,
                states,
                outcome: SolveOutcome::StepUnderflow,
                stats,
                final_time: t,
                final_state: y.clone(),
            };
        }
        let target = grid[next];
        let h_min = S::lit(16.0) * eps * t.abs().max(S::one());
        if h < h_min {
            return SampledSolution {
                times,
                states,
                outcome: SolveOutcome::StepUnderflow,
                stats,
                final_time: t,
                final_state: y.clone(),
            };
        }
        h = h.min(ctl.max_step);
        // Stretch by up to 1% rather than leave a sliver before the sample.
        let lands = target - t <= h * S::lit(1.01);
        let h_try = if lands { target - t } else { h };

        match trial_step(&mut rhs, t, &y, h_try, &ctl, &mut ws, &mut stats) {
            Trial::StageRefused => {
                stats.rejected += 1;
                last_rejected = true;
                h = h_try * S::lit(0.25);
            }
            Trial::Done { err } => {
                let fac11 = err.powf(1.0 / 8.0);
                if err <= 1.0 {
                    let t_new = if lands { target } else { t + h_try };
                    // The slope at the new state seeds the next step.
                    stats.evaluations += 1;
                    let checked = admissible(t_new, &ws.y_new)
                        .and_then(|()| rhs(t_new, &ws.y_new, &mut ws.k[0]));
                    if let Err(e) = checked {
                        return SampledSolution {
                            times,
                            states,
                            outcome: SolveOutcome::Refused(e),
                            stats,
                            final_time: t,
                            final_state: y.clone(),
                        };
                    }
                    stats.accepted += 1;
                    std::mem::swap(&mut y, &mut ws.y_new);
                    t = t_new;
                    if lands {
                        times.push(t);
                        states.push(y.clone());
                        next += 1;
                    }
                    // A step cut short to land on a sample keeps the current proposal.
                    if !(lands && h_try < h) {
                        let fac = (fac11 / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                        let mut h_new = h_try / S::lit(fac);
                        if last_rejected {
                            h_new = h_new.min(h_try);
                        }
                        h = h_new;
                    }
                    last_rejected = false;
                } else {
                    stats.rejected += 1;
                    last_rejected = true;
                    let fac = (fac11 / SAFETY).min(1.0 / FAC_MIN);
                    h = h_try / S::lit(fac);
                }
            }
        }
    }

    SampledSolution {
        times,
        states,
        outcome: SolveOutcome::Completed,
        stats,
        final_time: t,
        final_state: y,
    }
}
