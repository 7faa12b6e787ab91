#include <stdio.h>
#include <stdlib.h>
#include <string.h>

int main(void) {
    int cap = 2, len = 0, x;
    int *v = malloc(cap * sizeof(int));
    while (scanf("%d", &x) == 1) {
        if (len == cap) {
            cap *= 2;
            v = realloc(v, cap * sizeof(int));
        }
        v[len++] = x;
    }
    int *copy = calloc(len + 1, sizeof(int));
    memcpy(copy, v, len * sizeof(int));
    long s = 0;
    for (int i = 0; i < len; i++) s += copy[i] * (long)(i + 1);
    printf("%d %ld\n", len, s);
    free(copy);
    free(v);
    return 0;
}
