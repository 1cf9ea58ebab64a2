#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "nvdd/control.hpp"

// Line-oriented textual format for control schedules. Statements are joined
// with ';'. Preset statements (xy8, cpmg, axy8, ccd, mod, hh, sync) compose
// sequentially; primitive statements (dur, pulse, tone) describe one schedule
// at absolute times and cannot be mixed with presets.
//
//   xy8 n=<int> tau=<us> [rand=<seed>]
//   cpmg n=<int> tau=<us> [rand=<seed>]
//   axy8 n=<int> d1=<us> d2=<us> T=<us> [rand=<seed>]
//   ccd w0=<rad/us> W1=<rad/us> W2=<rad/us> phi=<rad> T=<us>
//   mod w0=<rad/us> W1=<rad/us> nu=<rad/us> T=<us> [w=<carrier>]
//   hh W=<rad/us> phi=<rad> T=<us> [w=<carrier>]
//   sync u=<index> n=<int> T=<us> [w=<rad/us>]
//   dur T=<us>
//   pulse t=<us> phi=<rad> a=<rad> [width=<us>] [u=<index>] [blk=<int>]
//   tone t0=<us> t1=<us> W=<rad/us> phi=<rad> [Wd= Wf= Wp=] [ef= ep=] [w=] [tag=]
//
// serialize() emits the canonical preset text when the schedule was built by
// presets, otherwise the primitive form; parse(serialize(s)) reproduces s
// exactly (shortest round-trip number formatting).

namespace nvdd::dsl {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t column)
      : std::runtime_error(msg + " (column " + std::to_string(column) + ")"),
        column_(column) {}
  std::size_t column() const { return column_; }

 private:
  std::size_t column_;
};

control::ControlSchedule parse(const std::string& text);
std::string serialize(const control::ControlSchedule& s);

}  // namespace nvdd::dsl
