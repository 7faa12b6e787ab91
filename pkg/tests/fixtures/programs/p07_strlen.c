#include <stdio.h>

static int my_strlen(const char *s) {
    const char *p = s;
    while (*p)
        p++;
    return (int)(p - s);
}

int main(void) {
    char buf[128];
    while (scanf("%127s", buf) == 1)
        printf("%d\n", my_strlen(buf));
    return 0;
}
