#pragma once

#include <cstdint>

namespace biscotti {

using PeerId = uint32_t;

}  // namespace biscotti
