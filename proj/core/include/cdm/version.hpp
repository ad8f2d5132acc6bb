#pragma once

namespace cdm {

// Library version, "major.minor.patch".
const char* version();

}  // namespace cdm
