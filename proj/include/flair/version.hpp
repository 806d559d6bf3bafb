#ifndef FLAIR_VERSION_HPP
#define FLAIR_VERSION_HPP

namespace flair {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kReportSchema = 1;

}  // namespace flair

#endif  // FLAIR_VERSION_HPP
