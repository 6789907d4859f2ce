//! Discrete-event simulation of a container terminal: vessels berth along a
//! continuous quay, quay cranes, trucks and yard cranes move boxes between
//! ship and yard, and a pluggable policy picks the yard block for each box.
//!
//! Modules follow the data flow: [`scenario`] loads input files,
//! [`terminal`] runs the simulation on top of the [`des`] kernel with
//! [`allocation`] deciding berths and blocks, and [`metrics`] turns event
//! logs into KPIs, calibrates service times and audits logs.

/// Maps a slice on the rayon pool when the `parallel` feature is on,
/// sequentially otherwise. Output order always matches input order.
macro_rules! par_map {
    ($slice:expr, $f:expr) => {{
        #[cfg(feature = "parallel")]
        {
            use rayon::iter::{IntoParallelRefIterator, ParallelIterator};
            $slice.par_iter().map($f).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            $slice.iter().map($f).collect()
        }
    }};
}

pub mod allocation;
pub mod des;
pub mod metrics;
pub mod scenario;
pub mod terminal;

/// How independent runs are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    /// Rayon pool if built with `parallel`, plain iteration otherwise.
    #[default]
    Auto,
    Sequential,
}

impl Exec {
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            Exec::Auto => par_map!(items, f),
            Exec::Sequential => items.iter().map(f).collect(),
        }
    }
}
