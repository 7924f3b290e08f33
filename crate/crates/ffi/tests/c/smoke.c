#include <stdio.h>
#include <string.h>
#include "ssmk.h"

int main(void) {
    SsmkSpec *tent = NULL;
    if (ssmk_spec_builtin("tent", &tent) != SSMK_STATUS_OK) return 1;
    size_t rank = 0;
    if (ssmk_k0_rank(tent, 3, &rank) != SSMK_STATUS_OK || rank != 4) return 2;
    uint64_t count = 0;
    if (ssmk_backward_count(tent, "0", 3, &count) != SSMK_STATUS_OK || count != 5) return 3;
    char *json = NULL;
    if (ssmk_level_map_json(tent, SSMK_MAP_KIND_INCLUSION, 1, &json) != SSMK_STATUS_OK) return 4;
    printf("%s\n", json);
    ssmk_string_free(json);
    SsmkSpec *bad = NULL;
    if (ssmk_spec_builtin("torus", &bad) != SSMK_STATUS_UNKNOWN_BUILTIN || bad != NULL) return 5;
    if (strstr(ssmk_last_error_message(), "torus") == NULL) return 6;
    ssmk_spec_free(tent);
    return 0;
}
