#include "jumpcut/nn.hpp"

// Layers are header-only templates (float for training, double for gradient
// checks); this translation unit just keeps the header self-contained.
