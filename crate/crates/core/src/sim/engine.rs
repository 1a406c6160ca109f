//! Virtual-time event loop for one replication.
//!
//! Work is held by jobs that walk through plan segments. At every step the
//! loop grants each resource to the highest-priority job whose current segment
//! needs it (the request in service first, then refills oldest first), jumps
//! to the earliest of: a granted segment finishing, the next arrival, the next
//! queue sample, or the horizon. At equal timestamps completions are handled
//! before arrivals, and arrivals before samples.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::plan::{Plan, Resource, Segment};
use super::{queue_sample_times, ContentionPolicy, RunMetrics, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServeSource {
    /// Consumed a ready pre-compute.
    Buffered,
    /// Ran a fresh offline phase inline.
    Inline,
    /// Took over an unfinished background refill and completed it inline.
    Adopted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestRecord {
    pub arrival_s: f64,
    pub service_start_s: f64,
    pub online_start_s: f64,
    pub completion_s: f64,
    pub source: ServeSource,
}

impl RequestRecord {
    pub fn queue_wait_s(&self) -> f64 {
        self.service_start_s - self.arrival_s
    }

    pub fn offline_inline_s(&self) -> f64 {
        self.online_start_s - self.service_start_s
    }

    pub fn online_s(&self) -> f64 {
        self.completion_s - self.online_start_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Offline,
    Online,
}

#[derive(Debug, Clone)]
struct Job {
    part: Part,
    pos: usize,
    remaining: f64,
}

impl Job {
    fn segments<'p>(&self, plan: &'p Plan) -> &'p [Segment] {
        match self.part {
            Part::Offline => &plan.offline,
            Part::Online => &plan.online,
        }
    }

    /// Starts at the first segment of `part`; `None` if the part is empty.
    fn start(part: Part, plan: &Plan) -> Option<Job> {
        let job = Job {
            part,
            pos: 0,
            remaining: 0.0,
        };
        let first = job.segments(plan).first()?.seconds;
        Some(Job {
            remaining: first,
            ..job
        })
    }

    fn resource(&self, plan: &Plan) -> Resource {
        self.segments(plan)[self.pos].resource
    }

    /// Moves to the next segment; returns false when the part is finished.
    fn advance(&mut self, plan: &Plan) -> bool {
        self.pos += 1;
        match self.segments(plan).get(self.pos) {
            Some(s) => {
                self.remaining = s.seconds;
                true
            }
            None => false,
        }
    }

    fn progress(&self, plan: &Plan) -> f64 {
        let segs = self.segments(plan);
        let done: f64 = segs[..self.pos].iter().map(|s| s.seconds).sum();
        done + segs[self.pos].seconds - self.remaining
    }
}

struct Foreground {
    job: Option<Job>,
    arrival_s: f64,
    service_start_s: f64,
    online_start_s: f64,
    source: ServeSource,
}

struct State<'a> {
    plan: &'a Plan,
    policy: ContentionPolicy,
    depth: usize,
    now: f64,
    queue: VecDeque<f64>,
    fg: Option<Foreground>,
    refills: Vec<Job>,
    buffered: usize,
    /// A pre-compute held by the request in service counts against storage.
    in_use: bool,
    done: Vec<RequestRecord>,
    buffer_min: usize,
    buffer_max: usize,
}

impl State<'_> {
    fn start_service(&mut self) {
        if self.fg.is_some() {
            return;
        }
        let Some(arrival_s) = self.queue.pop_front() else {
            return;
        };
        let now = self.now;
        let mut fg = Foreground {
            job: None,
            arrival_s,
            service_start_s: now,
            online_start_s: now,
            source: ServeSource::Inline,
        };
        if self.buffered > 0 {
            self.buffered -= 1;
            self.in_use = true;
            fg.source = ServeSource::Buffered;
        } else if let Some(i) = self.most_progressed_refill() {
            fg.job = Some(self.refills.remove(i));
            fg.source = ServeSource::Adopted;
            self.in_use = true;
        } else {
            fg.job = Job::start(Part::Offline, self.plan);
            self.in_use = self.plan.slots > 0;
        }
        if fg.job.is_none() {
            fg.job = Job::start(Part::Online, self.plan);
        }
        self.fg = Some(fg);
        if self.fg.as_ref().is_some_and(|f| f.job.is_none()) {
            // Both parts empty: the request completes on the spot.
            self.finish_request();
        }
    }

    fn most_progressed_refill(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, job) in self.refills.iter().enumerate() {
            let p = job.progress(self.plan);
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((i, p));
            }
        }
        best.map(|(i, _)| i)
    }

    fn top_up(&mut self) {
        while self.refills.len() < self.depth
            && self.buffered + self.refills.len() + usize::from(self.in_use) < self.plan.slots
        {
            match Job::start(Part::Offline, self.plan) {
                Some(job) => self.refills.push(job),
                None => {
                    self.buffered += 1;
                }
            }
        }
    }

    fn finish_request(&mut self) {
        let fg = self.fg.take().expect("request in service");
        self.done.push(RequestRecord {
            arrival_s: fg.arrival_s,
            service_start_s: fg.service_start_s,
            online_start_s: fg.online_start_s,
            completion_s: self.now,
            source: fg.source,
        });
        self.in_use = false;
    }

    fn note_buffer(&mut self) {
        self.buffer_min = self.buffer_min.min(self.buffered);
        self.buffer_max = self.buffer_max.max(self.buffered);
    }
}

pub(super) fn arrival_stream(seed: u64, run_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_index as u64);
    rng
}

/// Inverse-CDF exponential sample.
pub(super) fn exponential(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(-u).ln_1p() / rate
}

pub(super) fn simulate(cfg: &SimConfig, plan: &Plan, run_index: usize) -> RunMetrics {
    let horizon = cfg.horizon_s;
    let mut rng = arrival_stream(cfg.seed, run_index);
    let rate = cfg.arrival_rate;
    let mut next_arrival = if rate > 0.0 {
        exponential(&mut rng, rate)
    } else {
        f64::INFINITY
    };
    let mut arrivals = 0usize;
    let sample_times = queue_sample_times(horizon, cfg.saturation_samples);
    let mut next_sample = 0usize;
    let mut queue_samples = Vec::with_capacity(sample_times.len());
    let mut buffer_samples = Vec::with_capacity(sample_times.len());

    let initial = if cfg.buffer_initially_full { plan.slots } else { 0 };
    let mut st = State {
        plan,
        policy: cfg.contention,
        depth: cfg.pipeline_depth,
        now: 0.0,
        queue: VecDeque::new(),
        fg: None,
        refills: Vec::new(),
        buffered: initial,
        in_use: false,
        done: Vec::new(),
        buffer_min: initial,
        buffer_max: initial,
    };
    st.top_up();

    let mut granted: Vec<usize> = Vec::new();
    loop {
        // Grant resources.
        let mut busy = [false; Resource::COUNT];
        let mut fg_finish = f64::INFINITY;
        if let Some(job) = st.fg.as_ref().and_then(|f| f.job.as_ref()) {
            busy[job.resource(plan).index()] = true;
            fg_finish = st.now + job.remaining;
        }
        granted.clear();
        if !(st.policy == ContentionPolicy::Exclusive && st.fg.is_some()) {
            for (i, job) in st.refills.iter().enumerate() {
                let r = job.resource(plan).index();
                if !busy[r] {
                    busy[r] = true;
                    granted.push(i);
                }
            }
        }

        let mut t = horizon.min(next_arrival);
        if let Some(&s) = sample_times.get(next_sample) {
            t = t.min(s);
        }
        t = t.min(fg_finish);
        for &i in &granted {
            t = t.min(st.now + st.refills[i].remaining);
        }

        // Advance time.
        let dt = t - st.now;
        if let Some(job) = st.fg.as_mut().and_then(|f| f.job.as_mut()) {
            job.remaining -= dt;
        }
        let mut refill_done = Vec::new();
        for &i in &granted {
            let job = &mut st.refills[i];
            let finish = st.now + job.remaining;
            job.remaining -= dt;
            if finish <= t {
                refill_done.push(i);
            }
        }
        st.now = t;

        // Completions.
        if fg_finish <= t {
            let fg = st.fg.as_mut().expect("foreground");
            let job = fg.job.as_mut().expect("foreground job");
            if !job.advance(plan) {
                match job.part {
                    Part::Offline => {
                        fg.online_start_s = t;
                        fg.job = Job::start(Part::Online, plan);
                        if fg.job.is_none() {
                            st.finish_request();
                        }
                    }
                    Part::Online => st.finish_request(),
                }
            }
        }
        for &i in refill_done.iter().rev() {
            if !st.refills[i].advance(plan) {
                st.refills.remove(i);
                st.buffered += 1;
            }
        }
        st.note_buffer();

        // Arrivals.
        if next_arrival <= t && next_arrival < horizon {
            st.queue.push_back(next_arrival);
            arrivals += 1;
            next_arrival += exponential(&mut rng, rate);
        }

        st.start_service();
        st.top_up();
        st.note_buffer();

        // Samples.
        while sample_times.get(next_sample).is_some_and(|&s| s <= t) {
            queue_samples.push(st.queue.len() + usize::from(st.fg.is_some()));
            buffer_samples.push(st.buffered);
            next_sample += 1;
        }

        if t >= horizon && next_sample >= sample_times.len() {
            break;
        }
    }

    summarize(run_index, arrivals, st, queue_samples, buffer_samples, cfg.record_requests)
}

fn summarize(
    run_index: usize,
    arrivals: usize,
    st: State<'_>,
    queue_samples: Vec<usize>,
    buffer_samples: Vec<usize>,
    keep: bool,
) -> RunMetrics {
    let n = st.done.len();
    let (mut q, mut off, mut on, mut lat) = (0.0, 0.0, 0.0, 0.0);
    let mut buffered = 0;
    for r in &st.done {
        let (a, b, c) = (r.queue_wait_s(), r.offline_inline_s(), r.online_s());
        q += a;
        off += b;
        on += c;
        lat += a + b + c;
        if r.source == ServeSource::Buffered {
            buffered += 1;
        }
    }
    let mean = |x: f64| if n == 0 { f64::NAN } else { x / n as f64 };
    let saturated = queue_samples.windows(2).all(|w| w[0] < w[1]) && queue_samples.len() > 1;
    RunMetrics {
        run_index,
        arrivals,
        completed: n,
        mean_latency_s: mean(lat),
        mean_queue_wait_s: mean(q),
        mean_offline_inline_s: mean(off),
        mean_online_s: mean(on),
        served_buffered: buffered,
        served_inline: n - buffered,
        unserved_at_horizon: arrivals - n,
        queue_samples,
        buffer_samples,
        buffer_min: st.buffer_min,
        buffer_max: st.buffer_max,
        saturated,
        requests: if keep { st.done } else { Vec::new() },
    }
}
