#include "jumpcut/synth.hpp"

// Header-only templates; this translation unit keeps the header self-contained.
