//! Named random streams derived from a single root seed.
//!
//! Every stochastic component draws from its own ChaCha stream so that, for
//! example, changing the noise level does not perturb weight initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Init,
    Shuffle,
    Noise,
    MvTies,
    Synth,
}

impl Stream {
    pub const ALL: [Stream; 5] = [
        Stream::Init,
        Stream::Shuffle,
        Stream::Noise,
        Stream::MvTies,
        Stream::Synth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stream::Init => "init",
            Stream::Shuffle => "shuffle",
            Stream::Noise => "noise",
            Stream::MvTies => "mv-ties",
            Stream::Synth => "synth",
        }
    }

    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Shuffle => 2,
            Stream::Noise => 3,
            Stream::MvTies => 4,
            Stream::Synth => 5,
        }
    }
}

pub fn stream_rng(root_seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(stream.id());
    rng
}
