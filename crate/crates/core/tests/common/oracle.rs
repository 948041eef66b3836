//! Straight-line reference of the step loop: one pass over customers, one
//! over merchants, one over customers again, with no sharing of engine code
//! beyond the initial population and graph. Random streams are derived here
//! from the documented contract (SHA-256 key, ChaCha8, stream id = customer).

use outage_sim::agents::Mode;
use outage_sim::merchants::Label;
use outage_sim::{Config, Simulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn stream(seed: u64, name: &str, id: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    rng.set_stream(id);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CustomerSnap {
    pub trust: f64,
    pub scar: f64,
    pub rumor: f64,
    /// 0 OK, 1 FRUSTRATED, 2 AVOIDING
    pub mode: u8,
    pub balance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MerchantSnap {
    /// 0 ACCEPTING, 1 DEGRADED, 2 FALLBACK
    pub operational: u8,
    pub broadcast: u8,
    pub timer: f64,
    pub streak: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepSnap {
    pub customers: Vec<CustomerSnap>,
    pub merchants: Vec<MerchantSnap>,
    pub outflow: f64,
}

pub fn mode_code(m: Mode) -> u8 {
    match m {
        Mode::Ok => 0,
        Mode::Frustrated => 1,
        Mode::Avoiding => 2,
    }
}

pub fn label_code(l: Label) -> u8 {
    match l {
        Label::Accepting => 0,
        Label::Degraded => 1,
        Label::Fallback => 2,
    }
}

/// Engine trajectory, one snapshot per step.
pub fn engine_trajectory(config: &Config, seed: u64) -> Vec<StepSnap> {
    let mut sim = Simulation::new(config, seed).unwrap();
    let mut out = Vec::new();
    while !sim.is_finished() {
        let rec = sim.step();
        out.push(StepSnap {
            customers: sim
                .customers()
                .iter()
                .map(|c| CustomerSnap {
                    trust: c.state.trust,
                    scar: c.state.scar,
                    rumor: c.state.rumor,
                    mode: mode_code(c.state.mode),
                    balance: c.state.balance,
                })
                .collect(),
            merchants: sim
                .merchants()
                .iter()
                .map(|m| MerchantSnap {
                    operational: label_code(m.state.operational),
                    broadcast: label_code(m.state.broadcast),
                    timer: m.state.dwell_timer,
                    streak: m.state.clean_streak,
                })
                .collect(),
            outflow: rec.frame.outflow,
        });
    }
    out
}

/// Reference trajectory from the same initial conditions.
pub fn oracle_trajectory(config: &Config, seed: u64) -> Vec<StepSnap> {
    let sim = Simulation::new(config, seed).unwrap();
    let b = &config.behavior;
    let sub = &config.substitution;
    let cq = config.merchants.comm_quality;
    let n = sim.customers().len();
    let m = sim.merchants().len();
    let params: Vec<_> = sim.customers().iter().map(|c| c.params.clone()).collect();
    let mparams: Vec<_> = sim.merchants().iter().map(|x| x.params.clone()).collect();
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| sim.graph().neighbors(i).to_vec()).collect();
    let exposure: Vec<Vec<(usize, f64)>> = (0..n).map(|i| sim.exposure().of(i).to_vec()).collect();

    let mut cs: Vec<CustomerSnap> = sim
        .customers()
        .iter()
        .map(|c| CustomerSnap {
            trust: c.state.trust,
            scar: c.state.scar,
            rumor: c.state.rumor,
            mode: mode_code(c.state.mode),
            balance: c.state.balance,
        })
        .collect();
    let initial_total: f64 = cs.iter().map(|c| c.balance).sum();
    let mut ms: Vec<MerchantSnap> = vec![
        MerchantSnap {
            operational: 0,
            broadcast: 0,
            timer: 0.0,
            streak: 0
        };
        m
    ];
    // per merchant, per step (attempts, failures, unknowns)
    let mut history: Vec<Vec<(u32, u32, u32)>> = vec![Vec::new(); m];

    let mut att: Vec<ChaCha8Rng> = (0..n).map(|i| stream(seed, "attempts", i as u64)).collect();
    let mut outc: Vec<ChaCha8Rng> = (0..n).map(|i| stream(seed, "outcomes", i as u64)).collect();
    let mut subs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| stream(seed, "substitution", i as u64))
        .collect();
    let mut wd: Vec<ChaCha8Rng> = (0..n)
        .map(|i| stream(seed, "withdrawals", i as u64))
        .collect();

    let mut last_outflow = 0.0;
    let mut out = Vec::new();
    for t in 0..sim.timeline().horizon() {
        let p = sim.timeline().probs(t);
        let d = sim.timeline().demand(t);

        // 0 none, 1 success, 2 failure, 3 unknown
        let mut card = vec![0u8; n];
        let mut felt = vec![0u8; n];
        let mut chosen = vec![usize::MAX; n];
        for i in 0..n {
            let u1: f64 = att[i].gen();
            let u2: f64 = att[i].gen();
            let u3: f64 = outc[i].gen();
            let phi = [b.phi_ok, b.phi_frustrated, b.phi_avoiding][cs[i].mode as usize];
            let pa = (params[i].lambda * d * phi).min(1.0);
            if u1 < pa {
                let total: f64 = exposure[i].iter().map(|e| e.1).sum();
                let mut acc = 0.0;
                let mut pick = exposure[i].last().unwrap().0;
                for &(j, w) in &exposure[i] {
                    acc += w;
                    if u2 * total < acc {
                        pick = j;
                        break;
                    }
                }
                chosen[i] = pick;
                card[i] = if u3 < p.success {
                    1
                } else if u3 < p.success + p.failure {
                    2
                } else {
                    3
                };
                felt[i] = card[i];
                if sub.enabled && params[i].substitution_adopter && card[i] >= 2 {
                    let u4: f64 = subs[i].gen();
                    if u4 < sub.transfer_success_prob {
                        felt[i] = 1;
                    }
                }
            }
        }

        let mut step_counts = vec![(0u32, 0u32, 0u32); m];
        for i in 0..n {
            if card[i] != 0 {
                let c = &mut step_counts[chosen[i]];
                c.0 += 1;
                if card[i] == 2 {
                    c.1 += 1;
                }
                if card[i] == 3 {
                    c.2 += 1;
                }
            }
        }
        let before: Vec<u8> = ms.iter().map(|x| x.broadcast).collect();
        for j in 0..m {
            let mp = &mparams[j];
            history[j].push(step_counts[j]);
            let from = history[j].len().saturating_sub(mp.window_len);
            let (mut a, mut f, mut u) = (0u32, 0u32, 0u32);
            for h in &history[j][from..] {
                a += h.0;
                f += h.1;
                u += h.2;
            }
            let delta = (f as f64 + mp.eta * u as f64) / (a as f64 + mp.epsilon);
            let s = &mut ms[j];
            s.operational = if delta < mp.theta_degraded {
                0
            } else if delta < mp.theta_fallback {
                1
            } else {
                2
            };
            if s.operational != 0 {
                s.timer = mp.dwell_init;
                s.streak = 0;
                s.broadcast = s.broadcast.max(s.operational);
            } else {
                if step_counts[j].0 > 0 || mp.idle_counts_clean {
                    s.streak += 1;
                }
                if s.broadcast != 0 {
                    if s.timer <= 0.0 && s.streak >= mp.clean_required {
                        s.broadcast = 0;
                        s.timer = 0.0;
                    } else {
                        s.timer = (s.timer - cq).max(0.0);
                    }
                }
            }
        }
        let severity = |code: u8| [0.0, 0.5, 1.0][code as usize];
        let seen: Vec<u8> = match b.broadcast_timing {
            outage_sim::behavior::BroadcastTiming::Current => {
                ms.iter().map(|x| x.broadcast).collect()
            }
            outage_sim::behavior::BroadcastTiming::Previous => before,
        };

        let modes: Vec<u8> = cs.iter().map(|c| c.mode).collect();
        let fb = (last_outflow / (b.feedback_ref * initial_total)).min(1.0);
        let mut outflow = 0.0;
        for i in 0..n {
            let pr = &params[i];
            let mut bsum = 0.0;
            for &(j, _) in &exposure[i] {
                bsum += severity(seen[j]);
            }
            let bbar = bsum / exposure[i].len() as f64;
            let abar = if neighbors[i].is_empty() {
                0.0
            } else {
                neighbors[i].iter().filter(|&&k| modes[k] == 2).count() as f64
                    / neighbors[i].len() as f64
            };
            let psi = (b.w_merchant * bbar + b.w_social * abar + b.w_feedback * fb).clamp(0.0, 1.0);

            let c = &mut cs[i];
            let (raw, norm) = match felt[i] {
                0 => (0.0, c.trust),
                1 => (1.0, 1.0),
                2 => (
                    -b.alpha_failure,
                    (-b.alpha_failure + b.alpha_unknown) / (1.0 + b.alpha_unknown),
                ),
                _ => (
                    -b.alpha_unknown,
                    (-b.alpha_unknown + b.alpha_unknown) / (1.0 + b.alpha_unknown),
                ),
            };
            let norm = norm.clamp(0.0, 1.0);
            let new_scar =
                (pr.rho_scar * c.scar + if raw < 0.0 { pr.gamma_scar } else { 0.0 }).min(1.0);
            let new_trust = (pr.rho_trust * c.trust + (1.0 - pr.rho_trust) * norm
                - b.beta_trust * c.scar)
                .clamp(0.0, 1.0);
            c.rumor = (pr.rho_rumor * c.rumor + (1.0 - pr.rho_rumor) * psi).clamp(0.0, 1.0);
            c.scar = new_scar;
            c.trust = new_trust;
            let eff = c.trust - pr.kappa_scar * c.scar;
            c.mode = if eff >= pr.theta_upper {
                0
            } else if eff >= pr.theta_lower {
                1
            } else {
                2
            };

            let u: f64 = wd[i].gen();
            let eligible = c.mode == 2
                && c.scar >= pr.theta_scar_withdraw
                && c.rumor >= pr.theta_rumor_withdraw;
            let z = pr.alpha_rumor * c.rumor + pr.alpha_scar * c.scar - pr.alpha_trust * c.trust;
            if eligible && u < 1.0 / (1.0 + (-z).exp()) && c.balance > 0.0 {
                let amount = pr.omega * c.balance;
                c.balance -= amount;
                outflow += amount;
            }
        }
        last_outflow = outflow;
        out.push(StepSnap {
            customers: cs.clone(),
            merchants: ms.clone(),
            outflow,
        });
    }
    out
}

/// Small configuration with a compressed outage, for oracle comparisons.
pub fn small_config() -> Config {
    use outage_sim::scenario::{DemandWindow, PhaseRole, PhaseSpec, ScenarioSpec};
    let mut c = Config::baseline();
    c.population.customers = 20;
    c.population.merchants = 5;
    c.network.mean_degree = 4;
    c.scenario = ScenarioSpec {
        failure_share: 0.5,
        phases: vec![
            PhaseSpec::hold(PhaseRole::Stable, 8, 0.99),
            PhaseSpec::ramp(PhaseRole::Decline, 4, 0.3),
            PhaseSpec::hold(PhaseRole::Outage, 10, 0.3),
            PhaseSpec::ramp(PhaseRole::Recovery, 10, 0.99),
            PhaseSpec::hold(PhaseRole::Post, 18, 0.99),
        ],
        demand_windows: vec![DemandWindow {
            start: 20,
            steps: 6,
            multiplier: 1.5,
        }],
    };
    c
}

/// Variants covering substitution, outflow feedback, previous-step broadcasts
/// and faster communication.
pub fn oracle_configs() -> Vec<(&'static str, Config)> {
    let base = small_config();
    let mut sub = base.clone();
    sub.substitution.enabled = true;
    sub.substitution.transfer_success_prob = 0.5;
    let mut fb = base.clone();
    fb.behavior.w_feedback = 0.3;
    fb.behavior.broadcast_timing = outage_sim::behavior::BroadcastTiming::Previous;
    fb.merchants.comm_quality = 2.0;
    fb.merchants.idle_counts_clean = false;
    vec![("baseline", base), ("substitution", sub), ("feedback", fb)]
}

/// First difference between engine and oracle, if any.
pub fn compare(config: &Config, seed: u64) -> Result<usize, String> {
    let e = engine_trajectory(config, seed);
    let o = oracle_trajectory(config, seed);
    if e.len() != o.len() {
        return Err(format!("lengths {} vs {}", e.len(), o.len()));
    }
    for (t, (a, b)) in e.iter().zip(&o).enumerate() {
        if a != b {
            return Err(format!("step {t} differs:\nengine {a:?}\noracle {b:?}"));
        }
    }
    Ok(e.len())
}
