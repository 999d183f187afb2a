#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace plansearch::search {

// Named prompt templates with {placeholder} slots: {problem}, {observations},
// {sketch}, {pseudocode}, {code}, {w}, and for the judge {code_a}, {idea_a},
// {code_b}, {idea_b}. Every name has a built-in default; a directory of
// <name>.txt files overrides individual entries.
class PromptTemplates {
public:
    static PromptTemplates defaults();
    static PromptTemplates load(const std::filesystem::path& dir);

    const std::string& get(std::string_view name) const;
    void set(std::string_view name, std::string text);

    static const std::vector<std::string>& names();

private:
    std::map<std::string, std::string, std::less<>> templates_;
};

// Substitutes {key} for every key in `values`; other braces are left alone.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values);

}  // namespace plansearch::search
