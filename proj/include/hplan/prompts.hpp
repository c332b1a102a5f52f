// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hplan
{

/// Versioned prompt template by id, e.g. "actor-household-v1". Throws BadConfig for unknown ids.
[[nodiscard]] std::string_view promptTemplate(std::string_view id);

[[nodiscard]] std::vector<std::string> promptTemplateIds();

/// Replaces every {name} with vars[name]. "{{" and "}}" produce literal braces.
/// Throws BadConfig when a placeholder has no value.
[[nodiscard]] std::string fillTemplate(std::string_view tmpl, std::map<std::string, std::string> const& vars);

} // namespace hplan
